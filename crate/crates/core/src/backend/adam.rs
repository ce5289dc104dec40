use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Param, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F = f32> {
    pub m: Tensor<F>,
    pub v: Tensor<F>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
        }
    }
}

/// One bias-corrected Adam update of `param` from its accumulated gradient.
pub fn adam_step<F: Scalar>(param: &mut Param<F>, state: &mut AdamState<F>) -> Result<()> {
    if state.m.shape() != param.value.shape() || state.v.shape() != param.value.shape() {
        return Err(Error::Shape(format!(
            "adam state for `{}` has shape {:?}, parameter has {:?}",
            param.name,
            state.m.shape(),
            param.value.shape()
        )));
    }
    if !param.grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of `{}`", param.name)));
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::of(state.beta1);
    let b2 = F::of(state.beta2);
    let bc1 = F::of(1.0 - state.beta1.powi(t));
    let bc2 = F::of(1.0 - state.beta2.powi(t));
    let lr = F::of(state.lr);
    let eps = F::of(state.eps);
    let one = F::one();
    let grads = param.grad.data();
    let values = param.value.data_mut();
    let ms = state.m.data_mut();
    let vs = state.v.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        ms[i] = b1 * ms[i] + (one - b1) * g;
        vs[i] = b2 * vs[i] + (one - b2) * g * g;
        let m_hat = ms[i] / bc1;
        let v_hat = vs[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a set of named parameters; state is created on first use.
#[derive(Clone, Debug, Default)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    pub states: BTreeMap<String, AdamState<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            states: BTreeMap::new(),
        }
    }

    /// Updates every parameter, applying the current hyper-parameters.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param<F>>) -> Result<()> {
        for p in params {
            let config = self.config;
            let state = self
                .states
                .entry(p.name.clone())
                .or_insert_with(|| AdamState::new(p.value.shape(), config));
            state.lr = config.lr;
            state.beta1 = config.beta1;
            state.beta2 = config.beta2;
            state.eps = config.eps;
            adam_step(p, state)?;
        }
        Ok(())
    }
}
