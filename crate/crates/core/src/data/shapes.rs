use serde::{Deserialize, Serialize};

use super::{PackedDataset, VideoClip};
use crate::latent::{LengthHistogram, SeededRng};
use crate::{Error, Result};

/// Cubic Bezier curve `B(t)` with control points `p[0..4]`.
pub fn bezier_point(p: &[[f64; 2]; 4], t: f64) -> [f64; 2] {
    let s = 1.0 - t;
    let w = [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t];
    let mut out = [0.0; 2];
    for (wi, pi) in w.iter().zip(p) {
        out[0] += wi * pi[0];
        out[1] += wi * pi[1];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    LeftToRight,
    TopDown,
}

impl Motion {
    /// Class label used for categorical conditioning.
    pub fn label(self) -> usize {
        match self {
            Motion::LeftToRight => 0,
            Motion::TopDown => 1,
        }
    }
}

/// Rasterizes one shape on a black `size x size` canvas, `H x W x 3` bytes.
///
/// Pixel `(x, y)` is inside a square when `cx - r <= x < cx + r` (same for
/// `y`) and inside a circle when `(x - cx)^2 + (y - cy)^2 <= r^2`.
pub fn render_shape_frame(shape: Shape, center: [f64; 2], r: f64, color: [u8; 3], size: usize) -> Result<Vec<u8>> {
    let [cx, cy] = center;
    let hi = match shape {
        Shape::Square => size as f64,
        Shape::Circle => (size - 1) as f64,
    };
    if !(r > 0.0) || cx - r < 0.0 || cy - r < 0.0 || cx + r > hi || cy + r > hi {
        return Err(Error::Config(format!(
            "{shape:?} of size {r} at ({cx}, {cy}) leaves the {size}x{size} frame"
        )));
    }
    let mut frame = vec![0u8; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64, y as f64);
            let inside = match shape {
                Shape::Square => fx >= cx - r && fx < cx + r && fy >= cy - r && fy < cy + r,
                Shape::Circle => (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r,
            };
            if inside {
                frame[(y * size + x) * 3..][..3].copy_from_slice(&color);
            }
        }
    }
    Ok(frame)
}

/// Parameters of the procedural two-shape, two-motion dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeMotionSpec {
    pub count: usize,
    pub size: usize,
    pub length: usize,
    pub seed: u64,
}

impl Default for ShapeMotionSpec {
    fn default() -> Self {
        ShapeMotionSpec {
            count: 4000,
            size: 64,
            length: 16,
            seed: 0,
        }
    }
}

/// Smallest allowed per-pixel channel sum of a shape color.
pub const MIN_COLOR_SUM: u32 = 96;

impl ShapeMotionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if self.length == 0 || self.length > u16::MAX as usize {
            return Err(Error::Config(format!("length {} out of range", self.length)));
        }
        if self.size < 8 || self.size > u16::MAX as usize {
            return Err(Error::Config(format!("size {} out of range (minimum 8)", self.size)));
        }
        Ok(())
    }

    /// Inclusive range of the shape radius / half-side.
    pub fn radius_range(&self) -> (usize, usize) {
        (self.size / 8, self.size / 4)
    }

    /// The fixed conventions of the generator, for dataset metadata.
    pub fn conventions(&self) -> serde_json::Value {
        let (lo, hi) = self.radius_range();
        serde_json::json!({
            "shapes": ["circle", "square"],
            "motions": ["left_to_right", "top_down"],
            "label": "motion class, index % 2",
            "radius_range": [lo, hi],
            "color": format!("uniform RGB, channel sum >= {MIN_COLOR_SUM}"),
            "background": "black",
            "trajectory": "cubic bezier, P0/P3 on opposite margins, P1/P2 uniform in the safe region, centers rounded to pixels",
        })
    }
}

/// Everything that determines one shape-motion clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeMotionSample {
    pub shape: Shape,
    pub motion: Motion,
    pub radius: usize,
    pub color: [u8; 3],
    pub control_points: [[f64; 2]; 4],
    /// Integer pixel centers, one per frame.
    pub centers: Vec<[i64; 2]>,
}

/// Draws clip `index` of the dataset from its own random stream.
pub fn shape_motion_sample(spec: &ShapeMotionSpec, index: usize) -> Result<ShapeMotionSample> {
    spec.validate()?;
    let mut rng = SeededRng::for_purpose(spec.seed, "shape_motion", index as u64);
    let motion = if index % 2 == 0 {
        Motion::LeftToRight
    } else {
        Motion::TopDown
    };
    let shape = if rng.below(2) == 0 { Shape::Circle } else { Shape::Square };
    let (r_lo, r_hi) = spec.radius_range();
    let radius = r_lo + rng.below(r_hi - r_lo + 1);
    let color = loop {
        let c = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
        if c.iter().map(|&v| v as u32).sum::<u32>() >= MIN_COLOR_SUM {
            break c;
        }
    };
    // Safe region for centers: every shape pixel stays inside the frame.
    let lo = radius as f64;
    let hi = (spec.size - 1 - radius) as f64;
    if hi <= lo {
        return Err(Error::Config(format!(
            "size {} leaves no room to move a shape of radius {radius}",
            spec.size
        )));
    }
    let mut free = || rng.uniform_range(lo, hi);
    let (a, b) = (free(), free());
    let (p1, p2) = ([free(), free()], [free(), free()]);
    let (p0, p3) = match motion {
        Motion::LeftToRight => ([lo, a], [hi, b]),
        Motion::TopDown => ([a, lo], [b, hi]),
    };
    let control_points = [p0, p1, p2, p3];
    let centers = (0..spec.length)
        .map(|k| {
            let t = if spec.length == 1 {
                0.0
            } else {
                k as f64 / (spec.length - 1) as f64
            };
            let [x, y] = bezier_point(&control_points, t);
            [x.round() as i64, y.round() as i64]
        })
        .collect();
    Ok(ShapeMotionSample {
        shape,
        motion,
        radius,
        color,
        control_points,
        centers,
    })
}

pub fn render_sample(sample: &ShapeMotionSample, size: usize) -> Result<VideoClip> {
    let mut frames = Vec::with_capacity(sample.centers.len() * size * size * 3);
    for c in &sample.centers {
        frames.extend(render_shape_frame(
            sample.shape,
            [c[0] as f64, c[1] as f64],
            sample.radius as f64,
            sample.color,
            size,
        )?);
    }
    VideoClip::new(sample.centers.len(), size, size, frames, Some(sample.motion.label()))
}

/// Generates the full dataset; a pure function of `spec`.
pub fn generate_shape_motion(spec: &ShapeMotionSpec) -> Result<PackedDataset> {
    spec.validate()?;
    let clips = (0..spec.count)
        .map(|i| render_sample(&shape_motion_sample(spec, i)?, spec.size))
        .collect::<Result<Vec<_>>>()?;
    let histogram = LengthHistogram::from_lengths(clips.iter().map(VideoClip::len))?;
    Ok(PackedDataset { clips, histogram })
}
