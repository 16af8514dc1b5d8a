//! Procedural driving-scene stand-in: a textured background with a few
//! colored shapes. The class of an object is its color; the shape is noise.

use std::f64::consts::TAU;

use rand::Rng;

use crate::detection::{BBox, GroundTruthBox, GroundTruthFrame};
use crate::error::{Error, Result};
use crate::image::{ImageRgb, Rgb};

const PALETTE: [Rgb; 6] = [
    [0.85, 0.15, 0.12],
    [0.15, 0.75, 0.20],
    [0.15, 0.25, 0.85],
    [0.85, 0.80, 0.10],
    [0.80, 0.15, 0.80],
    [0.10, 0.80, 0.80],
];

pub const MAX_CLASSES: usize = PALETTE.len();
const COLOR_JITTER: f64 = 0.05;
const MAX_WOBBLE: f64 = 1.0;
const WOBBLE_FREQ: (f64, f64) = (0.05, 0.25);
const PIXEL_NOISE: f64 = 0.03;
/// Smallest lattice cell side, in pixels, that still holds a recognizable shape.
pub const MIN_CELL_SIDE: usize = 6;

/// Nominal color of a class.
pub fn class_color(class_id: usize) -> Option<Rgb> {
    PALETTE.get(class_id).copied()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Disk,
    Triangle,
}

/// An object anchored in one cell of the scene lattice. It wobbles smoothly
/// around its anchor by at most one pixel per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub class_id: usize,
    pub shape: Shape,
    pub w: usize,
    pub h: usize,
    pub anchor_x: f64,
    pub anchor_y: f64,
    pub wobble: (f64, f64),
    pub freq: f64,
    pub phase: (f64, f64),
    pub color: Rgb,
}

impl SceneObject {
    /// Top-left pixel at frame `t`, kept inside the image.
    pub fn origin(&self, t: usize, width: usize, height: usize) -> (usize, usize) {
        let arg = self.freq * t as f64;
        let x = self.anchor_x + self.wobble.0 * (arg + self.phase.0).sin();
        let y = self.anchor_y + self.wobble.1 * (arg + self.phase.1).sin();
        (
            (x.round().max(0.0) as usize).min(width - self.w),
            (y.round().max(0.0) as usize).min(height - self.h),
        )
    }

    /// Whether local pixel `(u, v)` of the bounding rectangle is covered.
    fn covers(&self, u: usize, v: usize) -> bool {
        let (w, h) = (self.w as f64, self.h as f64);
        let (cu, cv) = (u as f64 + 0.5, v as f64 + 0.5);
        match self.shape {
            Shape::Rectangle => true,
            Shape::Disk => {
                let r = 0.5 * w.min(h);
                (cu - 0.5 * w).powi(2) + (cv - 0.5 * h).powi(2) <= r * r
            }
            Shape::Triangle => (cu - 0.5 * w).abs() <= 0.5 * w * cv / h,
        }
    }
}

/// Lattice cell rectangle `(x0, y0, x1, y1)`, splitting the remainder the
/// same way the detector grid does.
fn lattice_cell(width: usize, height: usize, grid: usize, cx: usize, cy: usize) -> (usize, usize, usize, usize) {
    (cx * width / grid, cy * height / grid, (cx + 1) * width / grid, (cy + 1) * height / grid)
}

/// Smooth per-channel texture plus per-frame sensor noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Background {
    base: Rgb,
    amplitude: Rgb,
    freq: (f64, f64),
    phase: Rgb,
}

impl Background {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            base: [0; 3].map(|_| rng.gen_range(0.10..0.35)),
            amplitude: [0; 3].map(|_| rng.gen_range(0.02..0.08)),
            freq: (rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3)),
            phase: [0; 3].map(|_| rng.gen_range(0.0..TAU)),
        }
    }

    fn at(&self, x: usize, y: usize) -> Rgb {
        let arg = self.freq.0 * x as f64 + self.freq.1 * y as f64;
        [0, 1, 2].map(|c| self.base[c] + self.amplitude[c] * (arg + self.phase[c]).sin())
    }
}

fn random_object<R: Rng + ?Sized>(rng: &mut R, class_id: usize, cell: (usize, usize, usize, usize)) -> SceneObject {
    let shape = match rng.gen_range(0..3) {
        0 => Shape::Rectangle,
        1 => Shape::Disk,
        _ => Shape::Triangle,
    };
    let (x0, y0, x1, y1) = cell;
    let side = (x1 - x0).min(y1 - y0);
    let (w, h) = if shape == Shape::Rectangle {
        (rng.gen_range(x1 - x0 - 1..=x1 - x0), rng.gen_range(y1 - y0 - 1..=y1 - y0))
    } else {
        let s = rng.gen_range(side - 1..=side);
        (s, s)
    };
    let base = PALETTE[class_id];
    SceneObject {
        class_id,
        shape,
        w,
        h,
        anchor_x: x0 as f64 + 0.5 * (x1 - x0 - w) as f64,
        anchor_y: y0 as f64 + 0.5 * (y1 - y0 - h) as f64,
        wobble: (rng.gen_range(0.0..=MAX_WOBBLE), rng.gen_range(0.0..=MAX_WOBBLE)),
        freq: rng.gen_range(WOBBLE_FREQ.0..=WOBBLE_FREQ.1),
        phase: (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)),
        color: base.map(|c| (c + rng.gen_range(-COLOR_JITTER..=COLOR_JITTER)).clamp(0.0, 1.0)),
    }
}

/// Places up to `count` objects with random classes in distinct lattice
/// cells of a `grid x grid` lattice. Occupied cells are never adjacent, so
/// wobbling objects cannot touch.
pub(crate) fn random_objects<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    num_classes: usize,
    width: usize,
    height: usize,
    grid: usize,
) -> Vec<SceneObject> {
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        for _attempt in 0..50 {
            let c = (rng.gen_range(0..grid), rng.gen_range(0..grid));
            if cells.iter().all(|o| o.0.abs_diff(c.0) > 1 || o.1.abs_diff(c.1) > 1) {
                cells.push(c);
                break;
            }
        }
    }
    cells
        .into_iter()
        .map(|(cx, cy)| {
            let class_id = rng.gen_range(0..num_classes);
            random_object(rng, class_id, lattice_cell(width, height, grid, cx, cy))
        })
        .collect()
}

/// Renders frame `t`. Ground-truth boxes are the tight bounds of each
/// object's covered pixels.
pub fn render_scene<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    background: &Background,
    objects: &[SceneObject],
    t: usize,
    rng: &mut R,
) -> Result<(ImageRgb, GroundTruthFrame)> {
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let p = background.at(x, y);
            data.extend(p.iter().map(|v| v + rng.gen_range(-PIXEL_NOISE..=PIXEL_NOISE)));
        }
    }
    let mut boxes = Vec::with_capacity(objects.len());
    for o in objects {
        if o.w > width || o.h > height {
            return Err(Error::InvalidInput(format!("object {}x{} does not fit the frame", o.w, o.h)));
        }
        let (ox, oy) = o.origin(t, width, height);
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for v in 0..o.h {
            for u in 0..o.w {
                if !o.covers(u, v) {
                    continue;
                }
                let (px, py) = (ox + u, oy + v);
                let i = (py * width + px) * 3;
                for c in 0..3 {
                    data[i + c] = o.color[c] + rng.gen_range(-PIXEL_NOISE..=PIXEL_NOISE);
                }
                bounds = Some(match bounds {
                    None => (px, py, px, py),
                    Some((a, b, c, d)) => (a.min(px), b.min(py), c.max(px), d.max(py)),
                });
            }
        }
        let (x0, y0, x1, y1) =
            bounds.ok_or_else(|| Error::InvalidState(format!("object {o:?} covers no pixel")))?;
        boxes.push(GroundTruthBox {
            bbox: BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)?,
            class_id: o.class_id,
        });
    }
    Ok((ImageRgb::new(width, height, data)?, GroundTruthFrame::new(boxes)))
}
