use crate::backend::{Scalar, Tensor};
use crate::{Error, Result};

/// `u8` to `[-1, 1]` via `x / 127.5 - 1`.
pub fn normalize(x: u8) -> f32 {
    x as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize`], rounding and clamping to `[0, 255]`.
pub fn denormalize(x: f32) -> u8 {
    if x.is_nan() {
        return 0;
    }
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// A video of `K` frames stored as `u8` RGB in `K x H x W x 3` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoClip {
    len: usize,
    height: usize,
    width: usize,
    frames: Vec<u8>,
    pub label: Option<usize>,
}

impl VideoClip {
    pub fn new(len: usize, height: usize, width: usize, frames: Vec<u8>, label: Option<usize>) -> Result<Self> {
        if len == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty clip {len}x{height}x{width}")));
        }
        if frames.len() != len * height * width * 3 {
            return Err(Error::Shape(format!(
                "clip {len}x{height}x{width}x3 needs {} bytes, got {}",
                len * height * width * 3,
                frames.len()
            )));
        }
        Ok(VideoClip {
            len,
            height,
            width,
            frames,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_bytes(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, k: usize) -> &[u8] {
        let b = self.frame_bytes();
        &self.frames[k * b..(k + 1) * b]
    }

    pub fn bytes(&self) -> &[u8] {
        &self.frames
    }

    /// Frames `start..start + count` as a new clip with the same label.
    pub fn slice(&self, start: usize, count: usize) -> Result<VideoClip> {
        if count == 0 || start + count > self.len {
            return Err(Error::Shape(format!(
                "frames {start}..{} out of a {}-frame clip",
                start + count,
                self.len
            )));
        }
        let b = self.frame_bytes();
        VideoClip::new(
            count,
            self.height,
            self.width,
            self.frames[start * b..(start + count) * b].to_vec(),
            self.label,
        )
    }

    /// Writes frames `start..start + count` normalized into `out`, laid out
    /// as `count x 3 x H x W`.
    pub fn write_normalized<F: Scalar>(&self, start: usize, count: usize, out: &mut [F]) {
        let (h, w) = (self.height, self.width);
        let plane = h * w;
        for k in 0..count {
            let src = self.frame(start + k);
            let dst = &mut out[k * 3 * plane..(k + 1) * 3 * plane];
            for p in 0..plane {
                for c in 0..3 {
                    dst[c * plane + p] = F::of(normalize(src[p * 3 + c]) as f64);
                }
            }
        }
    }

    /// The whole clip as a `[K, 3, H, W]` tensor in `[-1, 1]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let mut data = vec![0.0; self.frames.len()];
        self.write_normalized(0, self.len, &mut data);
        Tensor::from_vec(&[self.len, 3, self.height, self.width], data).expect("clip tensor shape")
    }

    /// Builds a clip from `K x 3 x H x W` values in `[-1, 1]`.
    pub fn from_planar<F: Scalar>(len: usize, height: usize, width: usize, data: &[F], label: Option<usize>) -> Result<Self> {
        let plane = height * width;
        if data.len() != len * 3 * plane {
            return Err(Error::Shape(format!(
                "planar clip {len}x3x{height}x{width} needs {} values, got {}",
                len * 3 * plane,
                data.len()
            )));
        }
        let mut frames = vec![0u8; data.len()];
        for k in 0..len {
            let src = &data[k * 3 * plane..(k + 1) * 3 * plane];
            let dst = &mut frames[k * 3 * plane..(k + 1) * 3 * plane];
            for p in 0..plane {
                for c in 0..3 {
                    dst[p * 3 + c] = denormalize(src[c * plane + p].as_f64() as f32);
                }
            }
        }
        VideoClip::new(len, height, width, frames, label)
    }
}
