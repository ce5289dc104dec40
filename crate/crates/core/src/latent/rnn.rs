use super::LatentConfig;
use crate::backend::{GradFlags, GruCell, GruStepCache, Param, Scalar, Tensor};
use crate::latent::SeededRng;
use crate::{Error, Result};

/// One-layer GRU mapping i.i.d. noise (optionally prefixed by a one-hot
/// action code) to a correlated sequence of motion codes.
///
/// The initial hidden state is zero and the motion code at step `k` is the
/// hidden state after `k` cell applications.
pub struct MotionRnn<F: Scalar = f32> {
    cell: GruCell<F>,
    d_a: usize,
    d_e: usize,
    caches: Vec<GruStepCache<F>>,
}

impl<F: Scalar> MotionRnn<F> {
    /// All weights zero.
    pub fn zeros(cfg: &LatentConfig) -> Self {
        MotionRnn {
            cell: GruCell::new(cfg.d_a + cfg.d_e, cfg.d_m, "rnn"),
            d_a: cfg.d_a,
            d_e: cfg.d_e,
            caches: Vec::new(),
        }
    }

    /// Weights uniform in `[-1/sqrt(d_M), 1/sqrt(d_M)]`, biases zero.
    pub fn new(cfg: &LatentConfig, rng: &mut SeededRng) -> Self {
        let mut rnn = Self::zeros(cfg);
        let bound = 1.0 / (cfg.d_m as f64).sqrt();
        for p in rnn.cell.params_mut() {
            if p.value.rank() == 2 {
                for v in p.value.data_mut() {
                    *v = F::of(rng.uniform_range(-bound, bound));
                }
            }
        }
        rnn
    }

    pub fn cell(&self) -> &GruCell<F> {
        &self.cell
    }

    pub fn cell_mut(&mut self) -> &mut GruCell<F> {
        &mut self.cell
    }

    pub fn action_dim(&self) -> usize {
        self.d_a
    }

    pub fn noise_dim(&self) -> usize {
        self.d_e
    }

    pub fn motion_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        self.cell.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        self.cell.params_mut()
    }

    /// Unrolls over `noise` (`K` tensors of shape `[N, d_E]`). `action` is the
    /// `[N, d_A]` one-hot block prepended to every step's input.
    pub fn unroll(
        &mut self,
        noise: &[Tensor<F>],
        action: Option<&Tensor<F>>,
        keep_cache: bool,
    ) -> Result<Vec<Tensor<F>>> {
        let first = noise
            .first()
            .ok_or_else(|| Error::Shape("motion RNN needs at least one noise step".into()))?;
        let n = first.dim(0);
        match (action, self.d_a) {
            (None, 0) => {}
            (Some(a), d_a) if d_a > 0 && a.shape() == [n, d_a] => {}
            (a, d_a) => {
                return Err(Error::Shape(format!(
                    "motion RNN expects a [{n}, {d_a}] action block, got {:?}",
                    a.map(|t| t.shape().to_vec())
                )))
            }
        }
        self.caches.clear();
        let dm = self.motion_dim();
        let mut h = Tensor::zeros(&[n, dm]);
        let mut out = Vec::with_capacity(noise.len());
        for eps in noise {
            if eps.shape() != [n, self.d_e] {
                return Err(Error::Shape(format!(
                    "motion noise must be [{n}, {}], got {:?}",
                    self.d_e,
                    eps.shape()
                )));
            }
            let x = match action {
                Some(a) => concat_features(a, eps)?,
                None => eps.clone(),
            };
            let (next, cache) = self.cell.step(&x, &h)?;
            if keep_cache {
                self.caches.push(cache);
            }
            out.push(next.clone());
            h = next;
        }
        Ok(out)
    }

    /// Backpropagation through time; `grads[k]` is dL/dz_M^(k+1).
    pub fn backward(&mut self, grads: &[Tensor<F>]) -> Result<()> {
        if grads.len() != self.caches.len() {
            return Err(Error::Shape(format!(
                "motion RNN backward got {} step gradients for {} cached steps",
                grads.len(),
                self.caches.len()
            )));
        }
        let caches = std::mem::take(&mut self.caches);
        let mut dh: Option<Tensor<F>> = None;
        for (cache, g) in caches.iter().zip(grads).rev() {
            let mut total = g.clone();
            if let Some(carry) = &dh {
                total.add_assign(carry)?;
            }
            let (_, prev) = self.cell.step_backward(cache, &total, GradFlags::PARAMS_ONLY)?;
            dh = Some(prev);
        }
        Ok(())
    }
}

/// `[N, a] ++ [N, b] -> [N, a + b]`
fn concat_features<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let n = a.dim(0);
    if b.dim(0) != n {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (wa, wb) = (a.dim(1), b.dim(1));
    let mut out = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * wa..(i + 1) * wa]);
        out.extend_from_slice(&b.data()[i * wb..(i + 1) * wb]);
    }
    Tensor::from_vec(&[n, wa + wb], out)
}
