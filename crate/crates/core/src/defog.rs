//! Dark-channel-prior defogging with an adjustable degree `w` and an
//! atmospheric-light pixel fraction.
//!
//! The filter inverts the scattering model `I = J t + A (1 - t)` with
//! `t(x) = 1 - w * min_c min_{y in window(x)} I_c(y) / A_c`.
//! `A` is the per-channel mean of the image over the brightest pixels of the
//! dark channel. No transmission refinement is applied.

use crate::error::{invalid_param, Error, Result};
use crate::image::{clamp01, ImageRgb, Rgb, ScalarMap};

/// Parameters of the defogging filter.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DefogParams {
    /// Degree of defogging in `[0, 1]`.
    pub w: f64,
    /// Fraction of pixels averaged into the atmospheric light, in `(0, 0.05]`.
    pub alpha_frac: f64,
    /// Side of the square dark-channel window; odd.
    pub window: usize,
    /// Lower bound on transmission during scene recovery.
    pub t_floor: f64,
}

impl Default for DefogParams {
    fn default() -> Self {
        Self {
            w: 0.0,
            alpha_frac: 0.001,
            window: 15,
            t_floor: 0.1,
        }
    }
}

impl DefogParams {
    pub fn with_w(w: f64) -> Self {
        Self {
            w,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_w(self.w)?;
        if !(self.alpha_frac > 0.0 && self.alpha_frac <= 0.05) {
            return Err(invalid_param(
                "alpha_frac",
                format!("must be in (0, 0.05], got {}", self.alpha_frac),
            ));
        }
        check_window_shape(self.window)?;
        if !(self.t_floor > 0.0 && self.t_floor < 1.0) {
            return Err(invalid_param(
                "t_floor",
                format!("must be in (0, 1), got {}", self.t_floor),
            ));
        }
        Ok(())
    }
}

fn check_w(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(invalid_param("w", format!("must be in [0, 1], got {w}")));
    }
    Ok(())
}

fn check_window_shape(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(invalid_param("window", format!("must be odd and >= 1, got {window}")));
    }
    Ok(())
}

fn check_window(window: usize, width: usize, height: usize) -> Result<()> {
    check_window_shape(window)?;
    if window > width.min(height) {
        return Err(invalid_param(
            "window",
            format!("{window} exceeds the smaller image side {}", width.min(height)),
        ));
    }
    Ok(())
}

/// Per-pixel transmission `t(x)` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMap {
    pub width: usize,
    pub height: usize,
    pub t: Vec<f64>,
}

impl TransmissionMap {
    pub fn constant(width: usize, height: usize, t: f64) -> Self {
        Self {
            width,
            height,
            t: vec![clamp01(t); width * height],
        }
    }
}

/// Square min filter with border-clamped coordinates, done as two 1-D passes.
fn min_filter(values: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let r = window / 2;
    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            rows[y * width + x] = row[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi)
                .map(|yy| rows[yy * width + x])
                .fold(f64::INFINITY, f64::min);
        }
    }
    out
}

/// Minimum over channels and over the `window`-sized neighborhood of each pixel.
pub fn dark_channel(img: &ImageRgb, window: usize) -> Result<ScalarMap> {
    check_window(window, img.width(), img.height())?;
    let per_pixel: Vec<f64> = img.pixels().map(|p| p[0].min(p[1]).min(p[2])).collect();
    Ok(ScalarMap {
        width: img.width(),
        height: img.height(),
        values: min_filter(&per_pixel, img.width(), img.height(), window),
    })
}

/// Number of pixels averaged into the atmospheric light.
pub fn atmospheric_pixel_count(alpha_frac: f64, num_pixels: usize) -> usize {
    ((alpha_frac * num_pixels as f64).round() as usize).clamp(1, num_pixels)
}

/// Mean color over the pixels with the largest dark-channel values.
///
/// Ties are broken by row-major position, earlier first.
pub fn estimate_atmospheric_light(img: &ImageRgb, alpha_frac: f64, window: usize) -> Result<Rgb> {
    if !(alpha_frac > 0.0 && alpha_frac <= 0.05) {
        return Err(invalid_param(
            "alpha_frac",
            format!("must be in (0, 0.05], got {alpha_frac}"),
        ));
    }
    let dark = dark_channel(img, window)?;
    let count = atmospheric_pixel_count(alpha_frac, img.num_pixels());
    let mut order: Vec<usize> = (0..img.num_pixels()).collect();
    // stable sort keeps row-major order among equal values
    order.sort_by(|&a, &b| dark.values[b].total_cmp(&dark.values[a]));
    let mut sum = [0.0; 3];
    for &i in &order[..count] {
        let p = img.pixel_at(i);
        for c in 0..3 {
            sum[c] += p[c];
        }
    }
    Ok(sum.map(|s| clamp01(s / count as f64)))
}

/// `t(x) = 1 - w * min_c min_{y in window(x)} I_c(y) / A_c`, clamped to `[0, 1]`.
pub fn transmission_map(img: &ImageRgb, atmosphere: Rgb, w: f64, window: usize) -> Result<TransmissionMap> {
    if atmosphere.iter().any(|&a| a <= 0.0 || a.is_nan()) {
        return Err(Error::DegenerateAtmosphere(atmosphere));
    }
    check_w(w)?;
    check_window(window, img.width(), img.height())?;
    let ratios: Vec<f64> = img
        .pixels()
        .map(|p| (0..3).map(|c| p[c] / atmosphere[c]).fold(f64::INFINITY, f64::min))
        .collect();
    let t = min_filter(&ratios, img.width(), img.height(), window)
        .into_iter()
        .map(|m| clamp01(1.0 - w * m))
        .collect();
    Ok(TransmissionMap {
        width: img.width(),
        height: img.height(),
        t,
    })
}

/// Inverts the scattering model: `J = (I - A) / max(t, t_floor) + A`, clamped.
pub fn recover_scene(img: &ImageRgb, atmosphere: Rgb, t: &TransmissionMap, t_floor: f64) -> Result<ImageRgb> {
    if t.width != img.width() || t.height != img.height() || t.t.len() != img.num_pixels() {
        return Err(Error::InvalidInput(format!(
            "transmission map {}x{} does not match image {}x{}",
            t.width,
            t.height,
            img.width(),
            img.height()
        )));
    }
    Ok(img.map_pixels(|i, p| {
        // I + (I - A) (1/t - 1) is the same inverse, and exact for t = 1
        let gain = 1.0 / t.t[i].max(t_floor) - 1.0;
        [
            p[0] + (p[0] - atmosphere[0]) * gain,
            p[1] + (p[1] - atmosphere[1]) * gain,
            p[2] + (p[2] - atmosphere[2]) * gain,
        ]
    }))
}

/// Full defogging filter.
pub fn defog(img: &ImageRgb, params: &DefogParams) -> Result<ImageRgb> {
    params.validate()?;
    if params.w == 0.0 {
        // t is identically 1
        return Ok(img.clone());
    }
    let atmosphere = estimate_atmospheric_light(img, params.alpha_frac, params.window)?;
    if atmosphere.iter().any(|&a| a <= 0.0) {
        // black airlight: nothing to remove
        return Ok(img.clone());
    }
    let t = transmission_map(img, atmosphere, params.w, params.window)?;
    recover_scene(img, atmosphere, &t, params.t_floor)
}
