//! Adversarial and InfoGAN loss terms. Each `*_with_grad` function returns
//! the loss value together with its gradient with respect to the logits that
//! produced the probabilities, which is what discriminator backward passes
//! start from.

use serde::{Deserialize, Serialize};

use crate::backend::{Scalar, Tensor};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Which label a discriminator output is scored against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// `mean(-ln p)`
    Real,
    /// `mean(-ln(1 - p))`
    Fake,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenLossMode {
    /// Minimize `mean(ln(1 - D(fake)))`.
    Saturating,
    /// Minimize `mean(-ln D(fake))`.
    #[default]
    NonSaturating,
}

impl std::str::FromStr for GenLossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saturating" => Ok(GenLossMode::Saturating),
            "non_saturating" => Ok(GenLossMode::NonSaturating),
            other => Err(Error::Config(format!(
                "gen_loss_mode must be saturating or non_saturating, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for GenLossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GenLossMode::Saturating => "saturating",
            GenLossMode::NonSaturating => "non_saturating",
        })
    }
}

/// Mean binary cross-entropy against `target`.
pub fn bce<F: Scalar>(probs: &Tensor<F>, target: Target) -> f64 {
    let n = probs.len().max(1) as f64;
    probs
        .data()
        .iter()
        .map(|&p| {
            let p = clamp_prob(p.as_f64());
            match target {
                Target::Real => -p.ln(),
                Target::Fake => -(1.0 - p).ln(),
            }
        })
        .sum::<f64>()
        / n
}

/// [`bce`] and its gradient with respect to the pre-sigmoid logits.
pub fn bce_with_grad<F: Scalar>(probs: &Tensor<F>, target: Target) -> (f64, Tensor<F>) {
    let n = F::of(probs.len().max(1) as f64);
    let grad = match target {
        Target::Real => probs.map(|p| (p - F::one()) / n),
        Target::Fake => probs.map(|p| p / n),
    };
    (bce(probs, target), grad)
}

/// Generator objective on fake-sample probabilities for one discriminator.
pub fn generator_term_with_grad<F: Scalar>(probs: &Tensor<F>, mode: GenLossMode) -> (f64, Tensor<F>) {
    match mode {
        GenLossMode::NonSaturating => bce_with_grad(probs, Target::Real),
        GenLossMode::Saturating => {
            let (loss, grad) = bce_with_grad(probs, Target::Fake);
            (-loss, grad.map(|g| -g))
        }
    }
}

/// `(d_image_loss, d_video_loss)`, each `mean(-ln D(real)) + mean(-ln(1 - D(fake)))`.
pub fn discriminator_losses<F: Scalar>(
    image_real: &Tensor<F>,
    image_fake: &Tensor<F>,
    video_real: &Tensor<F>,
    video_fake: &Tensor<F>,
) -> (f64, f64) {
    (
        bce(image_real, Target::Real) + bce(image_fake, Target::Fake),
        bce(video_real, Target::Real) + bce(video_fake, Target::Fake),
    )
}

/// Sum of the image and video generator terms.
pub fn generator_loss<F: Scalar>(image_fake: &Tensor<F>, video_fake: &Tensor<F>, mode: GenLossMode) -> f64 {
    generator_term_with_grad(image_fake, mode).0 + generator_term_with_grad(video_fake, mode).0
}

/// `-mean(ln q[i, class_i])` over `[N, d_A]` softmax rows.
pub fn info_cross_entropy<F: Scalar>(q: &Tensor<F>, classes: &[usize]) -> Result<f64> {
    let d_a = check_q(q, classes)?;
    let total: f64 = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| -clamp_prob(q.data()[i * d_a + c].as_f64()).ln())
        .sum();
    Ok(total / classes.len() as f64)
}

/// [`info_cross_entropy`] and its gradient with respect to the Q logits,
/// `(q - onehot) / N`.
pub fn info_cross_entropy_with_grad<F: Scalar>(q: &Tensor<F>, classes: &[usize]) -> Result<(f64, Tensor<F>)> {
    let loss = info_cross_entropy(q, classes)?;
    let d_a = q.dim(1);
    let n = F::of(classes.len() as f64);
    let mut grad = q.map(|v| v / n);
    for (i, &c) in classes.iter().enumerate() {
        grad.data_mut()[i * d_a + c] -= F::one() / n;
    }
    Ok((loss, grad))
}

/// Mutual-information lower bound `L_I = mean(ln q[true]) + ln d_A` for a
/// uniform categorical code.
pub fn info_lower_bound<F: Scalar>(q: &Tensor<F>, classes: &[usize]) -> Result<f64> {
    let d_a = check_q(q, classes)?;
    Ok((d_a as f64).ln() - info_cross_entropy(q, classes)?)
}

fn check_q<F: Scalar>(q: &Tensor<F>, classes: &[usize]) -> Result<usize> {
    if q.rank() != 2 || q.dim(0) != classes.len() || classes.is_empty() {
        return Err(Error::Shape(format!(
            "Q output {:?} does not match {} class labels",
            q.shape(),
            classes.len()
        )));
    }
    let d_a = q.dim(1);
    if let Some(&bad) = classes.iter().find(|&&c| c >= d_a) {
        return Err(Error::Shape(format!("class {bad} out of range for {d_a} categories")));
    }
    Ok(d_a)
}
