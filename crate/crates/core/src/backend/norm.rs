use super::{Buffer, GradFlags, Mode, Param, Scalar, Tensor};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over axis 1 of an `[N, C, ...]` tensor.
///
/// Running statistics follow `r <- (1 - momentum) * r + momentum * batch`,
/// with the unbiased batch variance.
pub struct BatchNorm<F: Scalar = f32> {
    channels: usize,
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Buffer<F>,
    pub running_var: Buffer<F>,
    eps: F,
    momentum: F,
    cache: Option<BnCache<F>>,
}

struct BnCache<F> {
    shape: Vec<usize>,
    xhat: Vec<F>,
    inv_std: Vec<F>,
    batch_stats: bool,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize, name: &str) -> Self {
        BatchNorm {
            channels,
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], F::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(&[channels]),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::full(&[channels], F::one()),
            },
            eps: F::of(BN_EPS),
            momentum: F::of(BN_MOMENTUM),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub(crate) fn rename(&mut self, name: &str) {
        self.gamma.name = format!("{name}.gamma");
        self.beta.name = format!("{name}.beta");
        self.running_mean.name = format!("{name}.running_mean");
        self.running_var.name = format!("{name}.running_var");
    }

    fn layout(&self, shape: &[usize]) -> Result<(usize, usize)> {
        if shape.len() < 2 || shape[1] != self.channels {
            return Err(Error::Shape(format!(
                "batch_norm over {} channels got shape {shape:?}",
                self.channels
            )));
        }
        Ok((shape[0], shape[2..].iter().product()))
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let (n, l) = self.layout(x.shape())?;
        let c_total = self.channels;
        let m = n * l;
        if mode.uses_batch_stats() && m < 2 {
            return Err(Error::Shape(
                "batch_norm needs at least two values per channel in training mode".into(),
            ));
        }
        let xd = x.data();
        let mut xhat = vec![F::zero(); xd.len()];
        let mut inv_std = vec![F::zero(); c_total];
        let mut out = vec![F::zero(); xd.len()];
        let mf = F::of(m as f64);
        for c in 0..c_total {
            let (mean, var) = if mode.uses_batch_stats() {
                let mut sum = F::zero();
                for s in 0..n {
                    sum += xd[(s * c_total + c) * l..][..l].iter().copied().sum();
                }
                let mean = sum / mf;
                let mut sq = F::zero();
                for s in 0..n {
                    for &v in &xd[(s * c_total + c) * l..][..l] {
                        let d = v - mean;
                        sq += d * d;
                    }
                }
                let var = sq / mf;
                if mode == Mode::Train {
                    let mom = self.momentum;
                    let unbiased = sq / F::of((m - 1) as f64);
                    let rm = &mut self.running_mean.value.data_mut()[c];
                    *rm = (F::one() - mom) * *rm + mom * mean;
                    let rv = &mut self.running_var.value.data_mut()[c];
                    *rv = (F::one() - mom) * *rv + mom * unbiased;
                }
                (mean, var)
            } else {
                (
                    self.running_mean.value.data()[c],
                    self.running_var.value.data()[c],
                )
            };
            let istd = F::one() / (var + self.eps).sqrt();
            inv_std[c] = istd;
            let g = self.gamma.value.data()[c];
            let b = self.beta.value.data()[c];
            for s in 0..n {
                let base = (s * c_total + c) * l;
                for i in base..base + l {
                    let h = (xd[i] - mean) * istd;
                    xhat[i] = h;
                    out[i] = g * h + b;
                }
            }
        }
        self.cache = Some(BnCache {
            shape: x.shape().to_vec(),
            xhat,
            inv_std,
            batch_stats: mode.uses_batch_stats(),
        });
        Tensor::from_vec(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape("batch_norm: backward without forward".into()))?;
        if dy.shape() != cache.shape.as_slice() {
            return Err(Error::Shape(format!(
                "batch_norm: gradient shape {:?} != {:?}",
                dy.shape(),
                cache.shape
            )));
        }
        let (n, l) = self.layout(dy.shape())?;
        let c_total = self.channels;
        let m = F::of((n * l) as f64);
        let dyd = dy.data();
        let mut dx = if flags.input {
            vec![F::zero(); dyd.len()]
        } else {
            Vec::new()
        };
        for c in 0..c_total {
            let mut sum_dy = F::zero();
            let mut sum_dy_xhat = F::zero();
            for s in 0..n {
                let base = (s * c_total + c) * l;
                for i in base..base + l {
                    sum_dy += dyd[i];
                    sum_dy_xhat += dyd[i] * cache.xhat[i];
                }
            }
            if flags.params {
                self.gamma.grad.data_mut()[c] += sum_dy_xhat;
                self.beta.grad.data_mut()[c] += sum_dy;
            }
            if flags.input {
                let g = self.gamma.value.data()[c];
                let istd = cache.inv_std[c];
                for s in 0..n {
                    let base = (s * c_total + c) * l;
                    for i in base..base + l {
                        dx[i] = if cache.batch_stats {
                            g * istd / m * (m * dyd[i] - sum_dy - cache.xhat[i] * sum_dy_xhat)
                        } else {
                            g * istd * dyd[i]
                        };
                    }
                }
            }
        }
        if flags.input {
            Ok(Some(Tensor::from_vec(dy.shape(), dx)?))
        } else {
            Ok(None)
        }
    }
}
