use super::activation::sigmoid;
use super::{gemm, GradFlags, Param, Scalar, Tensor};
use crate::{Error, Result};

/// Gated recurrent unit:
///
/// ```text
/// r  = sigmoid(W_r x + U_r h + b_r)
/// u  = sigmoid(W_u x + U_u h + b_u)
/// h~ = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - u) * h + u * h~
/// ```
pub struct GruCell<F: Scalar = f32> {
    input_dim: usize,
    hidden_dim: usize,
    pub w_r: Param<F>,
    pub w_u: Param<F>,
    pub w_h: Param<F>,
    pub u_r: Param<F>,
    pub u_u: Param<F>,
    pub u_h: Param<F>,
    pub b_r: Param<F>,
    pub b_u: Param<F>,
    pub b_h: Param<F>,
}

/// Activations of one batched step, kept for backpropagation through time.
pub struct GruStepCache<F: Scalar = f32> {
    x: Tensor<F>,
    h: Tensor<F>,
    r: Vec<F>,
    u: Vec<F>,
    cand: Vec<F>,
    rh: Vec<F>,
}

/// `out[N, m] += x[N, k] * w[m, k]^T`
fn add_xwt<F: Scalar>(x: &[F], n: usize, k: usize, w: &[F], m: usize, out: &mut [F]) {
    gemm(n, k, m, F::one(), x, false, k, w, true, k, F::one(), out, m);
}

/// `out[N, k] += g[N, m] * w[m, k]`
fn add_gw<F: Scalar>(g: &[F], n: usize, m: usize, w: &[F], k: usize, out: &mut [F]) {
    gemm(n, m, k, F::one(), g, false, m, w, false, k, F::one(), out, k);
}

/// `dw[m, k] += g[N, m]^T * x[N, k]`
fn add_gtx<F: Scalar>(g: &[F], n: usize, m: usize, x: &[F], k: usize, dw: &mut [F]) {
    gemm(m, n, k, F::one(), g, true, m, x, false, k, F::one(), dw, k);
}

impl<F: Scalar> GruCell<F> {
    /// All weights and biases zero.
    pub fn new(input_dim: usize, hidden_dim: usize, name: &str) -> Self {
        let p = |tag: &str, shape: &[usize]| Param::new(format!("{name}.{tag}"), Tensor::zeros(shape));
        GruCell {
            input_dim,
            hidden_dim,
            w_r: p("w_r", &[hidden_dim, input_dim]),
            w_u: p("w_u", &[hidden_dim, input_dim]),
            w_h: p("w_h", &[hidden_dim, input_dim]),
            u_r: p("u_r", &[hidden_dim, hidden_dim]),
            u_u: p("u_u", &[hidden_dim, hidden_dim]),
            u_h: p("u_h", &[hidden_dim, hidden_dim]),
            b_r: p("b_r", &[hidden_dim]),
            b_u: p("b_u", &[hidden_dim]),
            b_h: p("b_h", &[hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        vec![
            &self.w_r, &self.w_u, &self.w_h, &self.u_r, &self.u_u, &self.u_h, &self.b_r, &self.b_u,
            &self.b_h,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![
            &mut self.w_r,
            &mut self.w_u,
            &mut self.w_h,
            &mut self.u_r,
            &mut self.u_u,
            &mut self.u_h,
            &mut self.b_r,
            &mut self.b_u,
            &mut self.b_h,
        ]
    }

    /// One batched step: `x: [N, input_dim]`, `h: [N, hidden_dim]`.
    pub fn step(&self, x: &Tensor<F>, h: &Tensor<F>) -> Result<(Tensor<F>, GruStepCache<F>)> {
        let (din, dh) = (self.input_dim, self.hidden_dim);
        if x.rank() != 2 || h.rank() != 2 || x.dim(1) != din || h.dim(1) != dh || x.dim(0) != h.dim(0) {
            return Err(Error::Shape(format!(
                "gru_cell({din} -> {dh}) got x {:?}, h {:?}",
                x.shape(),
                h.shape()
            )));
        }
        let n = x.dim(0);
        let bias_rows = |b: &Param<F>| -> Vec<F> {
            let mut v = Vec::with_capacity(n * dh);
            for _ in 0..n {
                v.extend_from_slice(b.value.data());
            }
            v
        };
        let mut a_r = bias_rows(&self.b_r);
        add_xwt(x.data(), n, din, self.w_r.value.data(), dh, &mut a_r);
        add_xwt(h.data(), n, dh, self.u_r.value.data(), dh, &mut a_r);
        let mut a_u = bias_rows(&self.b_u);
        add_xwt(x.data(), n, din, self.w_u.value.data(), dh, &mut a_u);
        add_xwt(h.data(), n, dh, self.u_u.value.data(), dh, &mut a_u);
        let r: Vec<F> = a_r.iter().map(|&v| sigmoid(v)).collect();
        let u: Vec<F> = a_u.iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<F> = r.iter().zip(h.data()).map(|(&a, &b)| a * b).collect();
        let mut a_h = bias_rows(&self.b_h);
        add_xwt(x.data(), n, din, self.w_h.value.data(), dh, &mut a_h);
        add_xwt(&rh, n, dh, self.u_h.value.data(), dh, &mut a_h);
        let cand: Vec<F> = a_h.iter().map(|v| v.tanh()).collect();
        let next: Vec<F> = (0..n * dh)
            .map(|i| (F::one() - u[i]) * h.data()[i] + u[i] * cand[i])
            .collect();
        let cache = GruStepCache {
            x: x.clone(),
            h: h.clone(),
            r,
            u,
            cand,
            rh,
        };
        Ok((Tensor::from_vec(&[n, dh], next)?, cache))
    }

    /// Backpropagates `dh_next` through one step; returns `(dx, dh_prev)`.
    pub fn step_backward(
        &mut self,
        cache: &GruStepCache<F>,
        dh_next: &Tensor<F>,
        flags: GradFlags,
    ) -> Result<(Tensor<F>, Tensor<F>)> {
        let (din, dh) = (self.input_dim, self.hidden_dim);
        let n = cache.x.dim(0);
        if dh_next.shape() != [n, dh] {
            return Err(Error::Shape(format!(
                "gru backward: gradient {:?} != [{n}, {dh}]",
                dh_next.shape()
            )));
        }
        let g = dh_next.data();
        let h = cache.h.data();
        let mut da_h = vec![F::zero(); n * dh];
        let mut da_u = vec![F::zero(); n * dh];
        let mut dh_prev = vec![F::zero(); n * dh];
        for i in 0..n * dh {
            let (u, c) = (cache.u[i], cache.cand[i]);
            da_h[i] = g[i] * u * (F::one() - c * c);
            da_u[i] = g[i] * (c - h[i]) * u * (F::one() - u);
            dh_prev[i] = g[i] * (F::one() - u);
        }
        // d(r * h) = da_h * U_h
        let mut drh = vec![F::zero(); n * dh];
        add_gw(&da_h, n, dh, self.u_h.value.data(), dh, &mut drh);
        let mut da_r = vec![F::zero(); n * dh];
        for i in 0..n * dh {
            let r = cache.r[i];
            da_r[i] = drh[i] * h[i] * r * (F::one() - r);
            dh_prev[i] += drh[i] * r;
        }
        add_gw(&da_r, n, dh, self.u_r.value.data(), dh, &mut dh_prev);
        add_gw(&da_u, n, dh, self.u_u.value.data(), dh, &mut dh_prev);

        let mut dx = vec![F::zero(); n * din];
        add_gw(&da_r, n, dh, self.w_r.value.data(), din, &mut dx);
        add_gw(&da_u, n, dh, self.w_u.value.data(), din, &mut dx);
        add_gw(&da_h, n, dh, self.w_h.value.data(), din, &mut dx);

        if flags.params {
            let x = cache.x.data();
            add_gtx(&da_r, n, dh, x, din, self.w_r.grad.data_mut());
            add_gtx(&da_u, n, dh, x, din, self.w_u.grad.data_mut());
            add_gtx(&da_h, n, dh, x, din, self.w_h.grad.data_mut());
            add_gtx(&da_r, n, dh, h, dh, self.u_r.grad.data_mut());
            add_gtx(&da_u, n, dh, h, dh, self.u_u.grad.data_mut());
            add_gtx(&da_h, n, dh, &cache.rh, dh, self.u_h.grad.data_mut());
            for (b, d) in [
                (&mut self.b_r, &da_r),
                (&mut self.b_u, &da_u),
                (&mut self.b_h, &da_h),
            ] {
                let gb = b.grad.data_mut();
                for row in d.chunks(dh) {
                    for (acc, &v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
            }
        }
        Ok((Tensor::from_vec(&[n, din], dx)?, Tensor::from_vec(&[n, dh], dh_prev)?))
    }
}

/// Single-vector GRU step.
pub fn gru_cell<F: Scalar>(x: &[F], h: &[F], cell: &GruCell<F>) -> Result<Vec<F>> {
    let xt = Tensor::from_vec(&[1, x.len()], x.to_vec())?;
    let ht = Tensor::from_vec(&[1, h.len()], h.to_vec())?;
    Ok(cell.step(&xt, &ht)?.0.into_vec())
}
