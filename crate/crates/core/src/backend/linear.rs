use super::{gemm, GradFlags, Param, Scalar, Tensor};
use crate::{Error, Result};

/// Fully connected layer on `[N, ...]` inputs; trailing axes are flattened.
pub struct Linear<F: Scalar = f32> {
    in_features: usize,
    out_features: usize,
    pub weight: Param<F>,
    pub bias: Param<F>,
    input: Option<Tensor<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(in_features: usize, out_features: usize, name: &str) -> Self {
        Linear {
            in_features,
            out_features,
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[out_features, in_features])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_features])),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub(crate) fn rename(&mut self, name: &str) {
        self.weight.name = format!("{name}.weight");
        self.bias.name = format!("{name}.bias");
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.rank() < 2 || x.len() != x.dim(0) * self.in_features {
            return Err(Error::Shape(format!(
                "linear({} -> {}) got input {:?}",
                self.in_features,
                self.out_features,
                x.shape()
            )));
        }
        let n = x.dim(0);
        let mut y = vec![F::zero(); n * self.out_features];
        for row in y.chunks_mut(self.out_features) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            n,
            self.in_features,
            self.out_features,
            F::one(),
            x.data(),
            false,
            self.in_features,
            self.weight.value.data(),
            true,
            self.in_features,
            F::one(),
            &mut y,
            self.out_features,
        );
        self.input = Some(x.clone());
        Tensor::from_vec(&[n, self.out_features], y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Shape("linear: backward without forward".into()))?;
        let n = x.dim(0);
        if dy.shape() != [n, self.out_features] {
            return Err(Error::Shape(format!(
                "linear: gradient shape {:?} != [{n}, {}]",
                dy.shape(),
                self.out_features
            )));
        }
        if flags.params {
            gemm(
                self.out_features,
                n,
                self.in_features,
                F::one(),
                dy.data(),
                true,
                self.out_features,
                x.data(),
                false,
                self.in_features,
                F::one(),
                self.weight.grad.data_mut(),
                self.in_features,
            );
            let db = self.bias.grad.data_mut();
            for row in dy.data().chunks(self.out_features) {
                for (b, &g) in db.iter_mut().zip(row) {
                    *b += g;
                }
            }
        }
        if !flags.input {
            return Ok(None);
        }
        let mut dx = vec![F::zero(); n * self.in_features];
        gemm(
            n,
            self.out_features,
            self.in_features,
            F::one(),
            dy.data(),
            false,
            self.out_features,
            self.weight.value.data(),
            false,
            self.in_features,
            F::zero(),
            &mut dx,
            self.in_features,
        );
        Ok(Some(Tensor::from_vec(x.shape(), dx)?))
    }
}
