//! Alternating adversarial training of the generator/motion RNN pair against
//! the image and video discriminators.

mod losses;
mod sampling;
mod step;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::AdamConfig;
use crate::{Error, Result};

pub use losses::{
    bce, bce_with_grad, clamp_prob, discriminator_losses, generator_loss, generator_term_with_grad,
    info_cross_entropy, info_cross_entropy_with_grad, info_lower_bound, GenLossMode, Target, PROB_CLAMP,
};
pub use sampling::{sample_s1, sample_s1_index, sample_st, sample_st_start, window_count};
pub use step::{minibatch_indices, train_loop, train_step};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: u64,
    /// Clip length seen by the video discriminator; fakes are generated at this length.
    pub t: usize,
    pub gen_loss: GenLossMode,
    /// Weight of the InfoGAN cross-entropy term.
    pub lambda_info: f64,
    pub adam: AdamConfig,
    /// Also train Q on real clips against their dataset labels.
    pub supervised_q: bool,
    /// Train Q on fakes against their sampled action codes. With
    /// `supervised_q` and this off, Q learns only from labeled real clips.
    pub q_on_fakes: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            iterations: 1000,
            t: 16,
            gen_loss: GenLossMode::NonSaturating,
            lambda_info: 1.0,
            adam: AdamConfig::default(),
            supervised_q: false,
            q_on_fakes: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda_info >= 0.0) {
            return Err(Error::Config(format!("lambda_info must be >= 0, got {}", self.lambda_info)));
        }
        if self.t < 2 {
            return Err(Error::Config(format!("T must be at least 2, got {}", self.t)));
        }
        if !self.q_on_fakes && !self.supervised_q {
            return Err(Error::Config("q_on_fakes = false needs supervised_q, or Q is never trained".into()));
        }
        Ok(())
    }
}

/// Losses of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub d_image: f64,
    pub d_video: f64,
    pub g: f64,
    /// InfoGAN cross-entropy on the generator step (0 without a Q head).
    pub info: f64,
}

pub const LOSS_CSV_HEADER: &str = "iteration,d_image,d_video,g,info";

impl LossReport {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.iteration, self.d_image, self.d_video, self.g, self.info)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("d_image_loss", self.d_image),
            ("d_video_loss", self.d_video),
            ("g_loss", self.g),
            ("info_loss", self.info),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} at iteration {}", self.iteration)));
            }
        }
        Ok(())
    }
}

pub fn write_loss_csv<W: Write>(w: &mut W, history: &[LossReport]) -> Result<()> {
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for r in history {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn save_loss_csv(path: impl AsRef<Path>, history: &[LossReport]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_loss_csv(&mut w, history)?;
    w.flush()?;
    Ok(())
}
