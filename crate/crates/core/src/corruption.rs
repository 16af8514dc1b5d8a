//! Fog and low-light synthesis, and the fog / low-light / clean mix policy
//! used during training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_param, Result};
use crate::image::{ImageRgb, ScalarMap};

/// Slope of the radial depth proxy, per pixel of distance from the center.
pub const DEPTH_SLOPE: f64 = 0.04;
/// Atmospheric light used when synthesizing fog for training.
pub const TRAINING_AIRLIGHT: f64 = 0.5;
pub const MAX_FOG_LEVEL: u8 = 9;
pub const LOW_LIGHT_ETA_RANGE: (f64, f64) = (1.5, 5.0);

/// Radial depth proxy at continuous coordinates `(x, y)`:
/// `sqrt(max(width, height)) - 0.04 * rho`, floored at 0, where `rho` is the
/// distance to the geometric center `((width - 1) / 2, (height - 1) / 2)`.
pub fn depth_at(x: f64, y: f64, width: usize, height: usize) -> f64 {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let rho = (x - cx).hypot(y - cy);
    ((width.max(height) as f64).sqrt() - DEPTH_SLOPE * rho).max(0.0)
}

/// Depth proxy sampled at every pixel.
pub fn depth_proxy(width: usize, height: usize) -> ScalarMap {
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            values.push(depth_at(x as f64, y as f64, width, height));
        }
    }
    ScalarMap {
        width,
        height,
        values,
    }
}

/// Fog strength: `beta = 0.01 * level + 0.05`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FogParams {
    pub level: u8,
    pub airlight: f64,
}

impl FogParams {
    pub fn new(level: u8) -> Result<Self> {
        let p = Self {
            level,
            airlight: TRAINING_AIRLIGHT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn beta(&self) -> f64 {
        0.01 * f64::from(self.level) + 0.05
    }

    pub fn validate(&self) -> Result<()> {
        if self.level > MAX_FOG_LEVEL {
            return Err(invalid_param(
                "level",
                format!("fog level must be in 0..={MAX_FOG_LEVEL}, got {}", self.level),
            ));
        }
        if !(0.0..=1.0).contains(&self.airlight) {
            return Err(invalid_param(
                "airlight",
                format!("must be in [0, 1], got {}", self.airlight),
            ));
        }
        Ok(())
    }
}

/// Scattering model for one intensity: `j t + a (1 - t)` with `t = exp(-beta depth)`.
#[inline]
pub fn fog_value(j: f64, airlight: f64, beta: f64, depth: f64) -> f64 {
    let t = (-beta * depth).exp();
    j * t + airlight * (1.0 - t)
}

/// Fogs `clean` with an explicit depth map.
pub fn synthesize_fog_with_depth(clean: &ImageRgb, depth: &ScalarMap, beta: f64, airlight: f64) -> Result<ImageRgb> {
    if depth.width != clean.width() || depth.height != clean.height() {
        return Err(crate::Error::InvalidInput(format!(
            "depth map {}x{} does not match image {}x{}",
            depth.width,
            depth.height,
            clean.width(),
            clean.height()
        )));
    }
    Ok(clean.map_pixels(|i, p| p.map(|v| fog_value(v, airlight, beta, depth.values[i]))))
}

/// Fogs `clean` using the radial depth proxy.
///
/// The scattering model is `I = J e^(-beta d) + A (1 - e^(-beta d))`, the same
/// model the defogging filter inverts with `t = e^(-beta d)`.
pub fn synthesize_fog(clean: &ImageRgb, params: &FogParams) -> Result<ImageRgb> {
    params.validate()?;
    let depth = depth_proxy(clean.width(), clean.height());
    synthesize_fog_with_depth(clean, &depth, params.beta(), params.airlight)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LowLightParams {
    pub eta: f64,
}

impl LowLightParams {
    pub fn new(eta: f64) -> Result<Self> {
        let p = Self { eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = LOW_LIGHT_ETA_RANGE;
        if !(lo..=hi).contains(&self.eta) {
            return Err(invalid_param(
                "eta",
                format!("must be in [{lo}, {hi}], got {}", self.eta),
            ));
        }
        Ok(())
    }
}

/// `N(x) = x^eta` per channel.
pub fn synthesize_low_light(clean: &ImageRgb, params: &LowLightParams) -> Result<ImageRgb> {
    params.validate()?;
    Ok(clean.map_values(|v| v.powf(params.eta)))
}

/// What the training loader serves for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Corruption {
    Fog(FogParams),
    LowLight(LowLightParams),
    Clean,
}

impl Corruption {
    pub fn apply(&self, img: &ImageRgb) -> Result<ImageRgb> {
        match self {
            Corruption::Fog(p) => synthesize_fog(img, p),
            Corruption::LowLight(p) => synthesize_low_light(img, p),
            Corruption::Clean => Ok(img.clone()),
        }
    }

    pub fn is_fog(&self) -> bool {
        matches!(self, Corruption::Fog(_))
    }

    pub fn is_low_light(&self) -> bool {
        matches!(self, Corruption::LowLight(_))
    }
}

/// Probabilities of serving the fog, low-light, and clean version of an image.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixPolicy {
    pub p_fog: f64,
    pub p_lowlight: f64,
    pub p_clean: f64,
    pub rng_seed: u64,
}

impl MixPolicy {
    /// One third each.
    pub fn uniform(rng_seed: u64) -> Self {
        Self {
            p_fog: 1.0 / 3.0,
            p_lowlight: 1.0 / 3.0,
            p_clean: 1.0 / 3.0,
            rng_seed,
        }
    }

    /// Never corrupts.
    pub fn clean_only(rng_seed: u64) -> Self {
        Self {
            p_fog: 0.0,
            p_lowlight: 0.0,
            p_clean: 1.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_fog, self.p_lowlight, self.p_clean];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid_param("mix_policy", format!("probabilities must be in [0, 1], got {ps:?}")));
        }
        if (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid_param("mix_policy", format!("probabilities must sum to 1, got {ps:?}")));
        }
        Ok(())
    }
}

/// Maps `draw` in `[0, 1)` to a corruption kind by interval, then draws the
/// kind's strength from `rng` (fog level uniform over `0..=9`, eta uniform
/// over `[1.5, 5]`).
pub fn sample_corruption<R: Rng + ?Sized>(policy: &MixPolicy, draw: f64, rng: &mut R) -> Corruption {
    if draw < policy.p_fog {
        Corruption::Fog(FogParams {
            level: rng.gen_range(0..=MAX_FOG_LEVEL),
            airlight: TRAINING_AIRLIGHT,
        })
    } else if draw < policy.p_fog + policy.p_lowlight {
        let (lo, hi) = LOW_LIGHT_ETA_RANGE;
        Corruption::LowLight(LowLightParams {
            eta: rng.gen_range(lo..=hi),
        })
    } else {
        Corruption::Clean
    }
}

/// Seeded stream of corruption draws.
#[derive(Clone, Debug)]
pub struct CorruptionSampler {
    policy: MixPolicy,
    rng: ChaCha8Rng,
}

impl CorruptionSampler {
    pub fn new(policy: MixPolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(policy.rng_seed),
            policy,
        })
    }

    pub fn next_corruption(&mut self) -> Corruption {
        let draw: f64 = self.rng.gen();
        sample_corruption(&self.policy, draw, &mut self.rng)
    }
}
