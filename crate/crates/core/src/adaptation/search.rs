//! Test-time search over filter parameters.
//!
//! One cycle of coordinate ascent visits `w`, gamma, contrast and exposure in
//! that order and runs a golden-section line search over each range. Two
//! self-supervised objectives are available: the sum of the scorer's `top_k`
//! cell scores on the filtered frame, or the agreement between the filtered
//! frame's mean cell features and the scorer's source statistics. The start point is the identity (clamped into the ranges), and a
//! coordinate only moves when the line search beats the incumbent, so the
//! returned objective is never below the start's.

use crate::defog::DefogParams;
use crate::detection::{CellFeatures, DetectorModel};
use crate::error::{invalid_param, Error, Result};
use crate::image::{apply_filter_chain, ImageRgb, PixelFilterParams};

/// Complete image-level filter setting: defog then gamma, contrast, exposure.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterParams {
    pub defog: DefogParams,
    pub pixel: PixelFilterParams,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl FilterParams {
    pub const IDENTITY: Self = Self {
        defog: DefogParams {
            w: 0.0,
            alpha_frac: 0.001,
            window: 15,
            t_floor: 0.1,
        },
        pixel: PixelFilterParams::IDENTITY,
    };

    pub fn is_identity(&self) -> bool {
        self.defog.w == 0.0 && self.pixel == PixelFilterParams::IDENTITY
    }

    /// Applies the chain; a zero defog degree skips the defog stage.
    pub fn apply(&self, img: &ImageRgb) -> Result<ImageRgb> {
        let defog = (self.defog.w > 0.0).then_some(&self.defog);
        apply_filter_chain(img, &self.pixel, defog)
    }

    fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::DefogW => self.defog.w,
            Axis::Gamma => self.pixel.gamma,
            Axis::Contrast => self.pixel.contrast,
            Axis::Exposure => self.pixel.exposure,
        }
    }

    fn set(&mut self, axis: Axis, v: f64) {
        match axis {
            Axis::DefogW => self.defog.w = v,
            Axis::Gamma => self.pixel.gamma = v,
            Axis::Contrast => self.pixel.contrast = v,
            Axis::Exposure => self.pixel.exposure = v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    DefogW,
    Gamma,
    Contrast,
    Exposure,
}

const AXES: [Axis; 4] = [Axis::DefogW, Axis::Gamma, Axis::Contrast, Axis::Exposure];

/// What the filter search maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchObjective {
    /// Sum of the `top_k` highest cell scores.
    TopScores,
    /// Negative L1 distance between the mean cell feature vector and the
    /// scorer's source statistics.
    FeatureAlignment,
}

impl SearchObjective {
    pub fn name(&self) -> &'static str {
        match self {
            SearchObjective::TopScores => "top_scores",
            SearchObjective::FeatureAlignment => "feature_alignment",
        }
    }
}

impl std::str::FromStr for SearchObjective {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_scores" => Ok(SearchObjective::TopScores),
            "feature_alignment" => Ok(SearchObjective::FeatureAlignment),
            _ => Err(invalid_param(
                "objective",
                format!("expected top_scores or feature_alignment, got `{s}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterSearchConfig {
    pub w_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub contrast_range: (f64, f64),
    pub exposure_range: (f64, f64),
    /// Objective evaluations per line search.
    pub evals_per_axis: usize,
    pub cycles: usize,
    pub objective: SearchObjective,
    /// A coordinate moves only when its line search beats the incumbent by
    /// more than this.
    pub min_gain: f64,
    /// Number of top cell scores summed by [`SearchObjective::TopScores`].
    pub top_k: usize,
    /// Defog settings other than `w`; held fixed during the search.
    pub defog: DefogParams,
}

impl Default for FilterSearchConfig {
    fn default() -> Self {
        Self {
            w_range: (0.0, 1.0),
            gamma_range: (0.5, 2.0),
            contrast_range: (0.0, 1.0),
            exposure_range: (-1.0, 1.0),
            evals_per_axis: 16,
            cycles: 1,
            objective: SearchObjective::TopScores,
            min_gain: 0.0,
            top_k: 10,
            defog: FilterParams::IDENTITY.defog,
        }
    }
}

impl FilterSearchConfig {
    /// Default ranges with the feature-alignment objective. Small gains are
    /// ignored so that frames already close to the source statistics keep
    /// the identity filter.
    pub fn aligned() -> Self {
        Self {
            objective: SearchObjective::FeatureAlignment,
            min_gain: 0.05,
            ..Self::default()
        }
    }

    /// Search only the defog degree; the pixel filters stay at identity.
    pub fn defog_only() -> Self {
        Self {
            gamma_range: (1.0, 1.0),
            contrast_range: (0.0, 0.0),
            exposure_range: (0.0, 0.0),
            ..Self::default()
        }
    }

    fn range(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::DefogW => self.w_range,
            Axis::Gamma => self.gamma_range,
            Axis::Contrast => self.contrast_range,
            Axis::Exposure => self.exposure_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("w_range", self.w_range),
            ("gamma_range", self.gamma_range),
            ("contrast_range", self.contrast_range),
            ("exposure_range", self.exposure_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid_param(name, format!("must satisfy lo <= hi, got ({lo}, {hi})")));
            }
        }
        if self.w_range.0 < 0.0 || self.w_range.1 > 1.0 {
            return Err(invalid_param("w_range", "must lie within [0, 1]"));
        }
        if self.gamma_range.0 <= 0.0 {
            return Err(invalid_param("gamma_range", "must be positive"));
        }
        if self.contrast_range.0 < 0.0 || self.contrast_range.1 > 1.0 {
            return Err(invalid_param("contrast_range", "must lie within [0, 1]"));
        }
        if self.evals_per_axis == 0 {
            return Err(invalid_param("evals_per_axis", "must be >= 1"));
        }
        if self.cycles == 0 {
            return Err(invalid_param("cycles", "must be >= 1"));
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return Err(invalid_param("min_gain", format!("must be >= 0, got {}", self.min_gain)));
        }
        if self.top_k == 0 {
            return Err(invalid_param("top_k", "must be >= 1"));
        }
        self.defog.validate()
    }

    /// Identity parameters clamped into the search ranges.
    pub fn start(&self) -> FilterParams {
        let mut p = FilterParams {
            defog: self.defog,
            pixel: PixelFilterParams::IDENTITY,
        };
        p.defog.w = 0.0;
        for axis in AXES {
            let (lo, hi) = self.range(axis);
            p.set(axis, p.get(axis).clamp(lo, hi));
        }
        p
    }

    pub fn contains(&self, p: &FilterParams) -> bool {
        AXES.iter().all(|&a| {
            let (lo, hi) = self.range(a);
            (lo..=hi).contains(&p.get(a))
        })
    }
}

/// Golden-section search for a maximum of `f` on `[lo, hi]` using at most
/// `max_evals` evaluations. Returns the best point evaluated.
pub fn golden_section_max(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, max_evals: usize) -> Result<Option<(f64, f64)>> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if max_evals == 0 || hi <= lo {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    if max_evals == 1 {
        let x = 0.5 * (a + b);
        return Ok(Some((x, f(x)?)));
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f2 > f1 { (x2, f2) } else { (x1, f1) };
    for _ in 2..max_evals {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    Ok(Some(best))
}

/// Self-supervised objective: sum of the `top_k` highest cell scores.
pub fn confidence_objective(scorer: &DetectorModel, img: &ImageRgb, top_k: usize) -> Result<f64> {
    scorer.validate()?;
    let cells = CellFeatures::compute(img, scorer.grid_size, &scorer.feature_spec)?;
    let mut scores: Vec<f64> = scorer.cell_scores(&cells).into_iter().flatten().collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    Ok(scores.iter().take(top_k).sum())
}

/// Negative L1 distance between the mean cell features of `img` and the
/// scorer's source statistics.
pub fn alignment_objective(scorer: &DetectorModel, img: &ImageRgb) -> Result<f64> {
    scorer.validate()?;
    let reference = scorer
        .source_stats
        .as_ref()
        .ok_or_else(|| Error::InvalidState("scorer has no source feature statistics".into()))?;
    let mean = CellFeatures::compute(img, scorer.grid_size, &scorer.feature_spec)?.mean();
    Ok(-mean.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Objective of `cfg` at `params` for one frame.
pub fn filter_objective(frame: &ImageRgb, scorer: &DetectorModel, params: &FilterParams, cfg: &FilterSearchConfig) -> Result<f64> {
    let img = params.apply(frame)?;
    match cfg.objective {
        SearchObjective::TopScores => confidence_objective(scorer, &img, cfg.top_k),
        SearchObjective::FeatureAlignment => alignment_objective(scorer, &img),
    }
}

/// Finds filter parameters that maximize the configured objective on `frame`.
pub fn search_filter_params(frame: &ImageRgb, scorer: &DetectorModel, cfg: &FilterSearchConfig) -> Result<FilterParams> {
    Ok(search_with_trace(frame, scorer, cfg)?.0)
}

/// Like [`search_filter_params`], also returning the objective at the result.
pub fn search_with_trace(frame: &ImageRgb, scorer: &DetectorModel, cfg: &FilterSearchConfig) -> Result<(FilterParams, f64)> {
    cfg.validate()?;
    let mut best = cfg.start();
    let mut best_value = filter_objective(frame, scorer, &best, cfg)?;
    for _ in 0..cfg.cycles {
        for axis in AXES {
            let (lo, hi) = cfg.range(axis);
            let base = best;
            let line = golden_section_max(
                |v| {
                    let mut p = base;
                    p.set(axis, v);
                    filter_objective(frame, scorer, &p, cfg)
                },
                lo,
                hi,
                cfg.evals_per_axis,
            )?;
            if let Some((v, value)) = line {
                if value > best_value + cfg.min_gain {
                    best.set(axis, v);
                    best_value = value;
                }
            }
        }
    }
    Ok((best, best_value))
}
