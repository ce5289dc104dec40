use super::{GradFlags, Scalar, Tensor};
use crate::{Error, Result};

/// Negative-side slope of every LeakyReLU in the networks.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

fn missing(what: &str) -> Error {
    Error::Shape(format!("{what}: backward without forward"))
}

fn check_same(dy: &Tensor<impl Scalar>, shape: &[usize], what: &str) -> Result<()> {
    if dy.shape() != shape {
        return Err(Error::Shape(format!(
            "{what}: gradient shape {:?} != {shape:?}",
            dy.shape()
        )));
    }
    Ok(())
}

pub struct LeakyRelu<F: Scalar = f32> {
    slope: F,
    input: Option<Tensor<F>>,
}

impl<F: Scalar> LeakyRelu<F> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: F::of(slope),
            input: None,
        }
    }

    pub fn slope(&self) -> f64 {
        self.slope.as_f64()
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let a = self.slope;
        let y = x.map(|v| if v > F::zero() { v } else { a * v });
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let x = self.input.as_ref().ok_or_else(|| missing("leaky_relu"))?;
        check_same(dy, x.shape(), "leaky_relu")?;
        if !flags.input {
            return Ok(None);
        }
        let a = self.slope;
        let dx = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&v, &g)| if v > F::zero() { g } else { a * g })
            .collect();
        Ok(Some(Tensor::from_vec(x.shape(), dx)?))
    }
}

pub(crate) fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

#[derive(Default)]
pub struct Sigmoid<F: Scalar = f32> {
    output: Option<Tensor<F>>,
}

impl<F: Scalar> Sigmoid<F> {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let y = x.map(sigmoid);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let y = self.output.as_ref().ok_or_else(|| missing("sigmoid"))?;
        check_same(dy, y.shape(), "sigmoid")?;
        if !flags.input {
            return Ok(None);
        }
        let dx = y
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&p, &g)| g * p * (F::one() - p))
            .collect();
        Ok(Some(Tensor::from_vec(y.shape(), dx)?))
    }
}

#[derive(Default)]
pub struct Tanh<F: Scalar = f32> {
    output: Option<Tensor<F>>,
}

impl<F: Scalar> Tanh<F> {
    pub fn new() -> Self {
        Tanh { output: None }
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let y = x.map(|v| v.tanh());
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let y = self.output.as_ref().ok_or_else(|| missing("tanh"))?;
        check_same(dy, y.shape(), "tanh")?;
        if !flags.input {
            return Ok(None);
        }
        let dx = y
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&t, &g)| g * (F::one() - t * t))
            .collect();
        Ok(Some(Tensor::from_vec(y.shape(), dx)?))
    }
}

/// Softmax over the last axis.
#[derive(Default)]
pub struct Softmax<F: Scalar = f32> {
    output: Option<Tensor<F>>,
}

pub(crate) fn softmax_rows<F: Scalar>(data: &[F], width: usize) -> Vec<F> {
    let mut out = vec![F::zero(); data.len()];
    for (row, dst) in data.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

impl<F: Scalar> Softmax<F> {
    pub fn new() -> Self {
        Softmax { output: None }
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let width = *x
            .shape()
            .last()
            .ok_or_else(|| Error::Shape("softmax of a rank-0 tensor".into()))?;
        let y = Tensor::from_vec(x.shape(), softmax_rows(x.data(), width))?;
        self.output = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let y = self.output.as_ref().ok_or_else(|| missing("softmax"))?;
        check_same(dy, y.shape(), "softmax")?;
        if !flags.input {
            return Ok(None);
        }
        let width = *y.shape().last().expect("checked in forward");
        let mut dx = vec![F::zero(); y.len()];
        for ((p, g), d) in y
            .data()
            .chunks(width)
            .zip(dy.data().chunks(width))
            .zip(dx.chunks_mut(width))
        {
            let dot: F = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
            for i in 0..width {
                d[i] = p[i] * (g[i] - dot);
            }
        }
        Ok(Some(Tensor::from_vec(y.shape(), dx)?))
    }
}
