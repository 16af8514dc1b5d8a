//! RGB image substrate and the pixel-wise tone filters (gamma, contrast, exposure).
//!
//! Intensities are stored as `f64` in `[0, 1]`, interleaved `r, g, b`, row-major.
//! Every constructor and filter clamps on write, so the range invariant holds
//! for any image reachable through the public API.

use std::f64::consts::PI;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use crate::defog::{self, DefogParams};
use crate::error::{invalid_param, Error, Result};

/// One RGB sample.
pub type Rgb = [f64; 3];

/// Luminance weights for `r`, `g`, `b`. They sum to exactly 1.
pub const LUMA_WEIGHTS: Rgb = [0.27, 0.67, 0.06];

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Planar-float RGB image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    /// Builds an image from an interleaved buffer, clamping every value into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "buffer length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A constant-color image.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::from_fn(width, height, |_, _| color)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved intensities.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Pixel by row-major index.
    #[inline]
    pub fn pixel_at(&self, index: usize) -> Rgb {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Applies `f` to every intensity and clamps the result.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp01(f(v))).collect(),
        }
    }

    /// Applies `f` to every pixel and clamps the result.
    pub fn map_pixels(&self, mut f: impl FnMut(usize, Rgb) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, p) in self.pixels().enumerate() {
            data.extend(f(i, p).iter().map(|&v| clamp01(v)));
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Rounds every intensity onto the 8-bit grid, i.e. what a PNG round trip yields.
    pub fn quantized(&self) -> Self {
        self.map_values(|v| f64::from(to_u8(v)) / 255.0)
    }

    pub fn mean_intensity(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Reads a PNG or binary PPM file (format detected from content).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let codec = |source| Error::Codec {
            path: path.to_path_buf(),
            source,
        };
        let img = ImageReader::open(path)
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?
            .with_guessed_format()
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?
            .decode()
            .map_err(codec)?
            .to_rgb8();
        Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    /// Writes PNG, or binary PPM (P6) when the extension is `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_ppm = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        crate::io::write_atomic(path, |w| {
            let bytes = self.to_rgb8();
            let (wd, ht) = (self.width as u32, self.height as u32);
            let res = if is_ppm {
                PnmEncoder::new(w)
                    .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
                    .write_image(&bytes, wd, ht, ExtendedColorType::Rgb8)
            } else {
                PngEncoder::new(w).write_image(&bytes, wd, ht, ExtendedColorType::Rgb8)
            };
            res.map_err(std::io::Error::other)
        })
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}

/// Single-channel scalar field over an image grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Peak signal-to-noise ratio in dB for unit-range images; infinite for identical images.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InvalidInput(format!(
            "psnr dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Weighted luminance `0.27 r + 0.67 g + 0.06 b`.
#[inline]
pub fn luminance(p: Rgb) -> f64 {
    // green-relative form: exact for gray pixels, where the weights sum to 1
    p[1] + LUMA_WEIGHTS[0] * (p[0] - p[1]) + LUMA_WEIGHTS[2] * (p[2] - p[1])
}

/// Raised-cosine luminance curve `(1 - cos(pi * lum)) / 2`.
#[inline]
pub fn enhanced_luminance(lum: f64) -> f64 {
    // cos(pi * lum) written as sin(pi * (0.5 - lum)) so that 0, 0.5 and 1 map exactly
    0.5 * (1.0 - (PI * (0.5 - lum)).sin())
}

/// Contrast-enhanced pixel: `P * EnLum(Lum(P)) / Lum(P)`, with black mapping to itself.
#[inline]
pub fn enhanced_pixel(p: Rgb) -> Rgb {
    let lum = luminance(p);
    if lum <= 0.0 {
        return p;
    }
    let k = enhanced_luminance(lum) / lum;
    [p[0] * k, p[1] * k, p[2] * k]
}

/// Parameters of the three pixel-wise filters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PixelFilterParams {
    pub gamma: f64,
    pub contrast: f64,
    /// Exposure in stops: values are scaled by `2^exposure`.
    pub exposure: f64,
}

impl Default for PixelFilterParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl PixelFilterParams {
    pub const IDENTITY: Self = Self {
        gamma: 1.0,
        contrast: 0.0,
        exposure: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        check_contrast(self.contrast)?;
        if !self.exposure.is_finite() {
            return Err(invalid_param("exposure", "must be finite"));
        }
        Ok(())
    }
}

fn check_gamma(g: f64) -> Result<()> {
    if !(g.is_finite() && g > 0.0) {
        return Err(invalid_param("gamma", format!("must be > 0, got {g}")));
    }
    Ok(())
}

fn check_contrast(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(invalid_param("contrast", format!("must be in [0, 1], got {c}")));
    }
    Ok(())
}

/// `P^G` per channel.
pub fn apply_gamma(img: &ImageRgb, gamma: f64) -> Result<ImageRgb> {
    check_gamma(gamma)?;
    Ok(img.map_values(|v| v.powf(gamma)))
}

/// `C * En(P) + (1 - C) * P` per pixel.
pub fn apply_contrast(img: &ImageRgb, contrast: f64) -> Result<ImageRgb> {
    check_contrast(contrast)?;
    let keep = 1.0 - contrast;
    Ok(img.map_pixels(|_, p| {
        let en = enhanced_pixel(p);
        [
            contrast * en[0] + keep * p[0],
            contrast * en[1] + keep * p[1],
            contrast * en[2] + keep * p[2],
        ]
    }))
}

/// `P * 2^E` per channel, clamped.
pub fn apply_exposure(img: &ImageRgb, exposure: f64) -> Result<ImageRgb> {
    if !exposure.is_finite() {
        return Err(invalid_param("exposure", "must be finite"));
    }
    let scale = (exposure * std::f64::consts::LN_2).exp();
    Ok(img.map_values(|v| v * scale))
}

/// Applies defog (when given), then gamma, contrast and exposure, in that order.
pub fn apply_filter_chain(
    img: &ImageRgb,
    params: &PixelFilterParams,
    defog_params: Option<&DefogParams>,
) -> Result<ImageRgb> {
    params.validate()?;
    let defogged = match defog_params {
        Some(d) => defog::defog(img, d)?,
        None => img.clone(),
    };
    let out = apply_gamma(&defogged, params.gamma)?;
    let out = apply_contrast(&out, params.contrast)?;
    apply_exposure(&out, params.exposure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: Rgb) -> ImageRgb {
        ImageRgb::filled(1, 1, p).unwrap()
    }

    #[test]
    fn luminance_examples() {
        assert_eq!(luminance([0.0; 3]), 0.0);
        assert_eq!(luminance([1.0; 3]), 1.0);
        assert!((luminance([0.5, 0.25, 0.75]) - 0.3475).abs() < 1e-12);
    }

    #[test]
    fn enhanced_luminance_examples() {
        assert_eq!(enhanced_luminance(0.0), 0.0);
        assert!((enhanced_luminance(0.5) - 0.5).abs() < 1e-15);
        assert!((enhanced_luminance(1.0) - 1.0).abs() < 1e-15);
        // (1 - sqrt(2)/2) / 2
        assert!((enhanced_luminance(0.25) - 0.146_446_609_406_726_24).abs() < 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let img = single([0.25, 0.0, 1.0]);
        let out = apply_gamma(&img, 2.0).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0625, 0.0, 1.0]);
        assert_eq!(apply_gamma(&img, 1.0).unwrap(), img);
        assert!(matches!(
            apply_gamma(&img, 0.0),
            Err(Error::InvalidParameter { name: "gamma", .. })
        ));
        assert!(apply_gamma(&img, -1.0).is_err());
    }

    #[test]
    fn contrast_examples() {
        let gray = single([0.5; 3]);
        for c in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(apply_contrast(&gray, c).unwrap(), gray);
        }
        let p = [0.5, 0.25, 0.75];
        let out = apply_contrast(&single(p), 1.0).unwrap().pixel(0, 0);
        // EnLum(0.3475) / 0.3475 evaluated independently: 0.7538853087...
        let k = 0.5 * (1.0 - (std::f64::consts::PI * 0.3475).cos()) / 0.3475;
        for c in 0..3 {
            assert!((out[c] - p[c] * k).abs() < 1e-12);
        }
        assert!(apply_contrast(&gray, 1.5).is_err());
        assert!(apply_contrast(&gray, -0.1).is_err());
    }

    #[test]
    fn contrast_keeps_black() {
        let black = single([0.0; 3]);
        assert_eq!(apply_contrast(&black, 1.0).unwrap(), black);
    }

    #[test]
    fn contrast_clamps_saturated_colors() {
        let out = apply_contrast(&single([1.0, 1.0, 0.0]), 1.0).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.pixel(0, 0)[0], 1.0);
    }

    #[test]
    fn exposure_examples() {
        let img = single([0.25, 0.75, 0.0]);
        assert_eq!(apply_exposure(&img, 0.0).unwrap(), img);
        assert_eq!(apply_exposure(&img, 1.0).unwrap().pixel(0, 0), [0.5, 1.0, 0.0]);
    }

    #[test]
    fn chain_examples() {
        let img = ImageRgb::from_fn(4, 3, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 0.3]).unwrap();
        let id = PixelFilterParams::IDENTITY;
        let d0 = DefogParams {
            w: 0.0,
            window: 3,
            ..DefogParams::default()
        };
        assert_eq!(apply_filter_chain(&img, &id, Some(&d0)).unwrap(), img);

        let exp = PixelFilterParams {
            exposure: 1.0,
            ..id
        };
        assert_eq!(
            apply_filter_chain(&img, &exp, None).unwrap(),
            apply_exposure(&img, 1.0).unwrap()
        );

        let half = single([0.5; 3]);
        let p = PixelFilterParams {
            gamma: 2.0,
            contrast: 0.0,
            exposure: 1.0,
        };
        assert_eq!(apply_filter_chain(&half, &p, None).unwrap().pixel(0, 0), [0.5; 3]);
    }

    #[test]
    fn constructor_clamps_and_validates() {
        let img = ImageRgb::new(1, 1, vec![-1.0, 2.0, f64::NAN]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 1.0, 0.0]);
        assert!(ImageRgb::new(2, 1, vec![0.0; 3]).is_err());
        assert!(ImageRgb::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn psnr_basics() {
        let a = single([0.5; 3]);
        let b = single([0.6; 3]);
        assert!(psnr(&a, &a).unwrap().is_infinite());
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn png_and_ppm_round_trip_on_the_8bit_grid() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageRgb::from_fn(5, 4, |x, y| [x as f64 / 5.0, y as f64 / 4.0, 0.77]).unwrap();
        let q = img.quantized();
        for name in ["a.png", "a.ppm"] {
            let path = dir.path().join(name);
            img.save(&path).unwrap();
            assert_eq!(ImageRgb::load(&path).unwrap(), q);
        }
        let raw = std::fs::read(dir.path().join("a.ppm")).unwrap();
        assert!(raw.starts_with(b"P6"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_image() -> impl Strategy<Value = ImageRgb> {
            (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                proptest::collection::vec(0.0f64..=1.0, w * h * 3)
                    .prop_map(move |d| ImageRgb::new(w, h, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn filters_preserve_range(img in arb_image(), g in 0.05f64..5.0, c in 0.0f64..=1.0, e in -4.0f64..4.0) {
                for out in [
                    apply_gamma(&img, g).unwrap(),
                    apply_contrast(&img, c).unwrap(),
                    apply_exposure(&img, e).unwrap(),
                ] {
                    prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }

            #[test]
            fn identity_params_are_bit_exact(img in arb_image()) {
                let out = apply_filter_chain(&img, &PixelFilterParams::IDENTITY, None).unwrap();
                prop_assert_eq!(out, img);
            }

            #[test]
            fn gamma_and_exposure_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, g in 0.05f64..5.0, e in -4.0f64..4.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let img = ImageRgb::new(2, 1, vec![lo, lo, lo, hi, hi, hi]).unwrap();
                for out in [apply_gamma(&img, g).unwrap(), apply_exposure(&img, e).unwrap()] {
                    prop_assert!(out.pixel(0, 0)[0] <= out.pixel(1, 0)[0]);
                }
            }
        }
    }

    #[test]
    fn enhanced_luminance_is_monotone_onto_unit_interval() {
        let mut prev = enhanced_luminance(0.0);
        for i in 1..=10_000 {
            let v = enhanced_luminance(i as f64 / 10_000.0);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        assert_eq!(enhanced_luminance(0.0), 0.0);
        assert!((prev - 1.0).abs() < 1e-15);
    }
}
