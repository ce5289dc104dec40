//! Latent sampling: content codes, motion trajectories, action codes and
//! video lengths.
//!
//! Every sampler takes an explicit [`SeededRng`], so a latent path is a pure
//! function of the configuration, the base seed and the stream ids.

mod rng;
mod rnn;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{Scalar, Tensor};
use crate::{Error, Result};

pub use rng::{stream_id, SeededRng};
pub use rnn::MotionRnn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentConfig {
    /// Content dimension.
    pub d_c: usize,
    /// Motion dimension (GRU hidden size).
    pub d_m: usize,
    /// Per-step noise dimension.
    pub d_e: usize,
    /// Number of action categories; 0 disables categorical conditioning.
    pub d_a: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            d_c: 50,
            d_m: 10,
            d_e: 10,
            d_a: 0,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_c == 0 || self.d_m == 0 || self.d_e == 0 {
            return Err(Error::Config(format!(
                "d_c, d_m and d_e must be at least 1 (got {}, {}, {})",
                self.d_c, self.d_m, self.d_e
            )));
        }
        if self.d_a == 1 {
            return Err(Error::Config("d_a must be 0 or at least 2".into()));
        }
        Ok(())
    }

    /// Dimension of one image latent `[z_C; z_M]`.
    pub fn image_latent_dim(&self) -> usize {
        self.d_c + self.d_m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode {
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionNoise {
    pub values: Vec<f32>,
}

/// One-hot action category.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionCode {
    class: usize,
    categories: usize,
}

impl ActionCode {
    pub fn new(class: usize, categories: usize) -> Result<Self> {
        if categories < 2 || class >= categories {
            return Err(Error::Config(format!(
                "action class {class} is invalid for {categories} categories"
            )));
        }
        Ok(ActionCode { class, categories })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn one_hot(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.categories];
        v[self.class] = 1.0;
        v
    }
}

/// `[z_C; z_M^(k)]` for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentFrame {
    pub values: Vec<f32>,
}

pub fn sample_content(cfg: &LatentConfig, rng: &mut SeededRng) -> ContentCode {
    ContentCode {
        values: rng.normal_vec(cfg.d_c),
    }
}

pub fn sample_motion_noise(cfg: &LatentConfig, len: usize, rng: &mut SeededRng) -> Vec<MotionNoise> {
    (0..len)
        .map(|_| MotionNoise {
            values: rng.normal_vec(cfg.d_e),
        })
        .collect()
}

/// Uniform one-hot over `cfg.d_a` categories.
pub fn sample_action(cfg: &LatentConfig, rng: &mut SeededRng) -> Result<ActionCode> {
    if cfg.d_a < 2 {
        return Err(Error::Config(format!(
            "sampling an action needs d_a >= 2, got {}",
            cfg.d_a
        )));
    }
    ActionCode::new(rng.below(cfg.d_a), cfg.d_a)
}

/// Runs the motion RNN over one video's noise sequence.
pub fn motion_rnn_unroll(
    rnn: &mut MotionRnn<f32>,
    noise: &[MotionNoise],
    action: Option<&ActionCode>,
) -> Result<Vec<Vec<f32>>> {
    let steps: Vec<Tensor<f32>> = noise
        .iter()
        .map(|e| Tensor::from_vec(&[1, e.values.len()], e.values.clone()))
        .collect::<Result<_>>()?;
    let action = action
        .map(|a| Tensor::from_vec(&[1, a.categories()], a.one_hot()))
        .transpose()?;
    let out = rnn.unroll(&steps, action.as_ref(), false)?;
    Ok(out.into_iter().map(Tensor::into_vec).collect())
}

/// Concatenates the content code with every motion code.
pub fn build_latent_path(content: &ContentCode, motion: &[Vec<f32>]) -> Result<Vec<LatentFrame>> {
    if motion.is_empty() {
        return Err(Error::Shape("latent path needs at least one motion code".into()));
    }
    Ok(motion
        .iter()
        .map(|m| {
            let mut values = content.values.clone();
            values.extend_from_slice(m);
            LatentFrame { values }
        })
        .collect())
}

/// Empirical distribution of clip lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthHistogram {
    probs: BTreeMap<usize, f64>,
}

impl LengthHistogram {
    pub fn new(probs: BTreeMap<usize, f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("length histogram is empty".into()));
        }
        if probs.keys().any(|&k| k == 0) {
            return Err(Error::Config("length histogram contains length 0".into()));
        }
        if probs.values().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("length histogram has a negative probability".into()));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "length histogram sums to {total}, not 1"
            )));
        }
        Ok(LengthHistogram { probs })
    }

    /// Histogram of the given clip lengths.
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for k in lengths {
            *counts.entry(k).or_default() += 1;
            total += 1;
        }
        let probs = counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        Self::new(probs)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().map(|(&k, &p)| (k, p))
    }

    pub fn min_length(&self) -> usize {
        *self.probs.keys().next().expect("non-empty by construction")
    }
}

/// Draws a clip length `kappa ~ p_K`.
pub fn sample_video_length(hist: &LengthHistogram, rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in hist.entries() {
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Independent draws for a minibatch of `n` videos of `len` frames.
#[derive(Clone, Debug)]
pub struct LatentBatch {
    /// `[N, d_C]`
    pub content: Tensor<f32>,
    /// `len` tensors of shape `[N, d_E]`.
    pub noise: Vec<Tensor<f32>>,
    /// Action class per video when `d_A > 0`.
    pub actions: Option<Vec<usize>>,
}

impl LatentBatch {
    pub fn sample(cfg: &LatentConfig, n: usize, len: usize, rng: &mut SeededRng) -> Result<Self> {
        let content = Tensor::from_vec(&[n, cfg.d_c], rng.normal_vec(n * cfg.d_c))?;
        let noise = (0..len)
            .map(|_| Tensor::from_vec(&[n, cfg.d_e], rng.normal_vec(n * cfg.d_e)))
            .collect::<Result<_>>()?;
        let actions = (cfg.d_a > 0).then(|| (0..n).map(|_| rng.below(cfg.d_a)).collect());
        Ok(LatentBatch {
            content,
            noise,
            actions,
        })
    }

    pub fn action_one_hot(&self, d_a: usize) -> Option<Tensor<f32>> {
        self.actions.as_ref().map(|classes| one_hot(classes, d_a))
    }
}

/// `[N, d_A]` one-hot rows for the given classes.
pub fn one_hot<F: Scalar>(classes: &[usize], d_a: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[classes.len(), d_a]);
    for (i, &c) in classes.iter().enumerate() {
        t.data_mut()[i * d_a + c] = F::one();
    }
    t
}

/// Builds the `[N * K, d_C + d_M]` generator input, rows ordered video-major.
pub fn assemble_latents<F: Scalar>(content: &Tensor<F>, motion: &[Tensor<F>]) -> Result<Tensor<F>> {
    let n = content.dim(0);
    let dc = content.dim(1);
    let k = motion.len();
    let dm = motion
        .first()
        .ok_or_else(|| Error::Shape("latent path needs at least one motion code".into()))?
        .dim(1);
    let d = dc + dm;
    let mut out = vec![F::zero(); n * k * d];
    for (step, m) in motion.iter().enumerate() {
        if m.shape() != [n, dm] {
            return Err(Error::Shape(format!(
                "motion code {step} has shape {:?}, expected [{n}, {dm}]",
                m.shape()
            )));
        }
        for v in 0..n {
            let row = &mut out[(v * k + step) * d..][..d];
            row[..dc].copy_from_slice(&content.data()[v * dc..(v + 1) * dc]);
            row[dc..].copy_from_slice(&m.data()[v * dm..(v + 1) * dm]);
        }
    }
    Tensor::from_vec(&[n * k, d], out)
}

/// Extracts per-step motion gradients from a `[N * K, d_C + d_M]` latent gradient.
pub fn split_motion_grads<F: Scalar>(grad: &Tensor<F>, n: usize, k: usize, d_c: usize) -> Result<Vec<Tensor<F>>> {
    if grad.rank() != 2 || grad.dim(0) != n * k || grad.dim(1) <= d_c {
        return Err(Error::Shape(format!(
            "latent gradient {:?} does not match {n} videos x {k} frames",
            grad.shape()
        )));
    }
    let d = grad.dim(1);
    let dm = d - d_c;
    (0..k)
        .map(|step| {
            let mut data = Vec::with_capacity(n * dm);
            for v in 0..n {
                data.extend_from_slice(&grad.data()[(v * k + step) * d + d_c..][..dm]);
            }
            Tensor::from_vec(&[n, dm], data)
        })
        .collect()
}
