//! Numeric contract for every network in the crate.
//!
//! Layers own their parameters and cache whatever their backward pass needs
//! during `forward`. There is no general autodiff graph: composite networks
//! call `backward` on their layers in reverse order.
//!
//! Everything is generic over [`Scalar`] so that the same layer code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod activation;
mod adam;
mod conv;
mod gradcheck;
mod gru;
mod layer;
mod linear;
mod norm;
mod scalar;
mod tensor;

pub use activation::{LeakyRelu, Sigmoid, Softmax, Tanh, LEAKY_RELU_SLOPE};
pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use conv::{conv_out_dim, conv_transpose_out_dim, Conv, ConvGeometry, ConvKind};
pub use gradcheck::{grad_check, GradCheckReport, Objective, ZERO_GRADIENT};
pub use gru::{gru_cell, GruCell, GruStepCache};
pub use layer::{layer_forward, Layer, LayerKind, Sequential};
pub use linear::Linear;
pub use norm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use scalar::Scalar;
pub(crate) use scalar::gemm;
pub use tensor::{Buffer, Param, Tensor};

/// How layers with batch statistics behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and update running statistics.
    Train,
    /// Normalize with batch statistics, leave running statistics untouched.
    TrainFrozenStats,
    /// Normalize with running statistics.
    Eval,
}

impl Mode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

/// Which gradients a backward pass must produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradFlags {
    /// Accumulate into parameter gradients.
    pub params: bool,
    /// Return the gradient with respect to the layer input.
    pub input: bool,
}

impl GradFlags {
    pub const ALL: GradFlags = GradFlags { params: true, input: true };
    pub const PARAMS_ONLY: GradFlags = GradFlags { params: true, input: false };
    pub const INPUT_ONLY: GradFlags = GradFlags { params: false, input: true };
}

/// Row-major `[N, C, L]` to `[C, N * L]`.
pub(crate) fn batch_to_channel_major<F: Scalar>(x: &[F], n: usize, c: usize, l: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let src = &x[(s * c + ch) * l..][..l];
            out[ch * n * l + s * l..][..l].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`batch_to_channel_major`].
pub(crate) fn channel_to_batch_major<F: Scalar>(x: &[F], n: usize, c: usize, l: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let src = &x[ch * n * l + s * l..][..l];
            out[(s * c + ch) * l..][..l].copy_from_slice(src);
        }
    }
    out
}
