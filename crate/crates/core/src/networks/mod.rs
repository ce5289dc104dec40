//! Image generator, image/video discriminators and the checkpointable bundle.
//!
//! Architectures follow the DCGAN-style tables: transposed convolutions with
//! batch norm and LeakyReLU for the generator, strided convolutions for the
//! discriminators. Discriminators are fully convolutional and emit a grid of
//! patch probabilities that losses average over.

mod bundle;
mod checkpoint;
mod discriminator;
mod generator;
mod init;

use serde::{Deserialize, Serialize};

use crate::backend::Scalar;
use crate::{Error, Result};

pub use bundle::{load_checkpoint, load_checkpoint_checked, save_checkpoint, NetworkBundle};
pub use checkpoint::{read_container, write_container, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use discriminator::{trunk_output_dims, video_trunk, ImageDiscriminator, VideoDiscOutput, VideoDiscriminator};
pub use generator::ImageGenerator;
pub use init::init_params;

/// Stride/padding interpretation of the video discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DvMode {
    /// Kernel 4, strides (1,2,2), (2,2,2), (2,2,2), padding 1, then a
    /// 1-channel conv that collapses the remaining time axis.
    Downsample,
    /// Kernel 4, stride 1, padding 0 on every layer.
    TableLiteral,
}

impl std::str::FromStr for DvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "downsample" => Ok(DvMode::Downsample),
            "table_literal" => Ok(DvMode::TableLiteral),
            other => Err(Error::Config(format!(
                "dv_mode must be downsample or table_literal, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for DvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DvMode::Downsample => "downsample",
            DvMode::TableLiteral => "table_literal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Square frame side `S`.
    pub image_size: usize,
    /// Channel multiplier; the widest generator layer has `8 * base` channels at S=64.
    pub base_channels: usize,
    /// Generator input dimension `d_C + d_M`.
    pub latent_dim: usize,
    /// Clip length seen by the video discriminator.
    pub t: usize,
    /// Q-head classes; 0 disables the head.
    pub d_a: usize,
    pub dv_mode: DvMode,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            image_size: 64,
            base_channels: 64,
            latent_dim: 60,
            t: 16,
            d_a: 0,
            dv_mode: DvMode::Downsample,
        }
    }
}

impl ArchConfig {
    /// First generator kernel and the number of stride-2 upsampling layers
    /// after it: `S = k0 * 2^n` with `k0` in {4, 6}.
    pub fn generator_plan(&self) -> Result<(usize, usize)> {
        let s = self.image_size;
        for k0 in [4, 6] {
            if s % k0 == 0 && (s / k0).is_power_of_two() {
                let n = (s / k0).trailing_zeros() as usize;
                if n >= 2 {
                    return Ok((k0, n));
                }
            }
        }
        Err(Error::Config(format!(
            "image size {s} is not reachable by the deconvolution stack (need 4*2^n or 6*2^n, n >= 2)"
        )))
    }

    pub fn validate(&self) -> Result<()> {
        self.generator_plan()?;
        if self.base_channels == 0 || self.latent_dim == 0 {
            return Err(Error::Config("base_channels and latent_dim must be positive".into()));
        }
        if self.t < 2 {
            return Err(Error::Config(format!("T must be at least 2, got {}", self.t)));
        }
        if self.d_a == 1 {
            return Err(Error::Config("d_a must be 0 or at least 2".into()));
        }
        Ok(())
    }
}

/// `[N, A, B, L]` to `[N, B, A, L]`.
pub(crate) fn swap_axes<F: Scalar>(x: &[F], n: usize, a: usize, b: usize, l: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for s in 0..n {
        for i in 0..a {
            for j in 0..b {
                let src = ((s * a + i) * b + j) * l;
                let dst = ((s * b + j) * a + i) * l;
                out[dst..dst + l].copy_from_slice(&x[src..src + l]);
            }
        }
    }
    out
}
