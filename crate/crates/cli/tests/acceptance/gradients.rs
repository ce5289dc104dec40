//! Finite-difference checks in f64.

use anyhow::{Context, Result};
use mocogan::backend::{
    grad_check, ConvGeometry, GradFlags, GruCell, GruStepCache, Layer, LayerKind, Mode, Objective, Param,
    Sequential, Tensor,
};
use mocogan::latent::SeededRng;
use mocogan::networks::{ArchConfig, DvMode, ImageDiscriminator, ImageGenerator, VideoDiscriminator};
use mocogan::training::{bce, bce_with_grad, info_cross_entropy, info_cross_entropy_with_grad, Target};

pub const TOLERANCE: f64 = 1e-5;
const STEP: f64 = 1e-5;

fn randomize<'a>(params: impl IntoIterator<Item = &'a mut Param<f64>>, rng: &mut SeededRng, scale: f64) {
    for p in params {
        let base = if p.name.ends_with(".gamma") { 1.0 } else { 0.0 };
        for v in p.value.data_mut() {
            *v = base + scale * rng.normal();
        }
    }
}

fn random_param(name: &str, shape: &[usize], rng: &mut SeededRng, scale: f64) -> Param<f64> {
    Param::new(name, Tensor::from_fn(shape, |_| scale * rng.normal()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum(c * layer(x))` for a fixed random `c`; the input is checked too.
struct LayerCase {
    layer: Layer<f64>,
    input: Param<f64>,
    coef: Vec<f64>,
}

impl Objective for LayerCase {
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut p = self.layer.params_mut();
        p.push(&mut self.input);
        p
    }

    fn evaluate(&mut self, with_grad: bool) -> mocogan::Result<f64> {
        let y = self.layer.forward(&self.input.value, Mode::Train)?;
        let loss = dot(y.data(), &self.coef);
        if with_grad {
            let dy = Tensor::from_vec(y.shape(), self.coef.clone())?;
            if let Some(dx) = self.layer.backward(&dy, GradFlags::ALL)? {
                self.input.grad.add_assign(&dx)?;
            }
        }
        Ok(loss)
    }
}

fn layer_case(kind: LayerKind, input_shape: &[usize], rng: &mut SeededRng) -> Result<LayerCase> {
    let mut layer = Layer::new(kind, "layer")?;
    randomize(layer.params_mut(), rng, 0.3);
    // Keep inputs away from the LeakyReLU kink.
    let mut input = random_param("input", input_shape, rng, 1.0);
    for v in input.value.data_mut() {
        if v.abs() < 1e-2 {
            *v += 0.05;
        }
    }
    let y = layer.forward(&input.value, Mode::Train)?;
    let coef = (0..y.len()).map(|_| rng.normal()).collect();
    Ok(LayerCase { layer, input, coef })
}

/// `sum_k c_k * h_k` over a four-step unroll with inputs and `h_0` checked.
struct GruCase {
    cell: GruCell<f64>,
    xs: Vec<Param<f64>>,
    h0: Param<f64>,
    coef: Vec<Vec<f64>>,
}

impl Objective for GruCase {
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut p = self.cell.params_mut();
        p.extend(self.xs.iter_mut());
        p.push(&mut self.h0);
        p
    }

    fn evaluate(&mut self, with_grad: bool) -> mocogan::Result<f64> {
        let mut h = self.h0.value.clone();
        let mut caches: Vec<GruStepCache<f64>> = Vec::new();
        let mut loss = 0.0;
        for (x, c) in self.xs.iter().zip(&self.coef) {
            let (next, cache) = self.cell.step(&x.value, &h)?;
            loss += dot(next.data(), c);
            caches.push(cache);
            h = next;
        }
        if with_grad {
            let mut carry: Option<Tensor<f64>> = None;
            for (k, cache) in caches.iter().enumerate().rev() {
                let mut g = Tensor::from_vec(h.shape(), self.coef[k].clone())?;
                if let Some(c) = &carry {
                    g.add_assign(c)?;
                }
                let (dx, dh) = self.cell.step_backward(cache, &g, GradFlags::ALL)?;
                self.xs[k].grad.add_assign(&dx)?;
                carry = Some(dh);
            }
            if let Some(c) = carry {
                self.h0.grad.add_assign(&c)?;
            }
        }
        Ok(loss)
    }
}

/// Transposed-conv generator into a conv discriminator on 8x8 images, scored
/// with binary cross-entropy against `target`.
struct MiniPipeline {
    g: Sequential<f64>,
    d: Sequential<f64>,
    z: Param<f64>,
    target: Target,
}

impl MiniPipeline {
    fn new(target: Target, rng: &mut SeededRng) -> Result<Self> {
        let (latent, nf, n) = (4, 3, 3);
        let mut g = Sequential::new("g");
        g.add(LayerKind::ConvTranspose2d { in_channels: latent, out_channels: nf, kernel: 4, stride: 1, padding: 0 })?;
        g.add(LayerKind::BatchNorm { channels: nf })?;
        g.add(LayerKind::LeakyRelu { slope: 0.2 })?;
        g.add(LayerKind::ConvTranspose2d { in_channels: nf, out_channels: 3, kernel: 4, stride: 2, padding: 1 })?;
        g.add(LayerKind::Tanh)?;
        let mut d = Sequential::new("d");
        d.add(LayerKind::Conv2d { in_channels: 3, out_channels: nf, kernel: 4, stride: 2, padding: 1 })?;
        d.add(LayerKind::BatchNorm { channels: nf })?;
        d.add(LayerKind::LeakyRelu { slope: 0.2 })?;
        d.add(LayerKind::Conv2d { in_channels: nf, out_channels: 1, kernel: 4, stride: 1, padding: 0 })?;
        d.add(LayerKind::Sigmoid)?;
        randomize(g.params_mut(), rng, 0.3);
        randomize(d.params_mut(), rng, 0.3);
        let z = random_param("z", &[n, latent, 1, 1], rng, 1.0);
        Ok(MiniPipeline { g, d, z, target })
    }
}

impl Objective for MiniPipeline {
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut p = self.g.params_mut();
        p.extend(self.d.params_mut());
        p.push(&mut self.z);
        p
    }

    fn evaluate(&mut self, with_grad: bool) -> mocogan::Result<f64> {
        let images = self.g.forward(&self.z.value, Mode::Train)?;
        debug_assert_eq!(images.shape()[2..], [8, 8]);
        let probs = self.d.forward(&images, Mode::Train)?;
        let (loss, d_logits) = bce_with_grad(&probs, self.target);
        if with_grad {
            let end = self.d.len() - 1;
            let d_images = self.d.backward_through(end, &d_logits, GradFlags::ALL)?.expect("input gradient requested");
            let dz = self.g.backward(&d_images, GradFlags::ALL)?.expect("input gradient requested");
            self.z.grad.add_assign(&dz)?;
        }
        Ok(loss)
    }
}

/// The crate's own generator and both discriminators (with the Q head) on
/// 16x16 frames: BCE on both realism outputs plus the Q cross-entropy.
struct FullNetworks {
    g: ImageGenerator<f64>,
    di: ImageDiscriminator<f64>,
    dv: VideoDiscriminator<f64>,
    latents: Param<f64>,
    videos: usize,
    t: usize,
    classes: Vec<usize>,
}

impl FullNetworks {
    fn new(rng: &mut SeededRng) -> Result<Self> {
        let arch = ArchConfig {
            image_size: 16,
            base_channels: 2,
            latent_dim: 5,
            t: 8,
            d_a: 2,
            dv_mode: DvMode::Downsample,
        };
        let mut g = ImageGenerator::new(&arch)?;
        let mut di = ImageDiscriminator::new(&arch)?;
        let mut dv = VideoDiscriminator::new(&arch)?;
        randomize(g.params_mut(), rng, 0.3);
        randomize(di.params_mut(), rng, 0.3);
        randomize(dv.params_mut(), rng, 0.3);
        let videos = 2;
        let latents = random_param("latents", &[videos * arch.t, arch.latent_dim], rng, 1.0);
        Ok(FullNetworks { g, di, dv, latents, videos, t: arch.t, classes: vec![0, 1] })
    }
}

impl Objective for FullNetworks {
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut p = self.g.params_mut();
        p.extend(self.di.params_mut());
        p.extend(self.dv.params_mut());
        p.push(&mut self.latents);
        p
    }

    fn evaluate(&mut self, with_grad: bool) -> mocogan::Result<f64> {
        let images = self.g.forward(&self.latents.value, Mode::Train)?;
        let s = images.dim(2);
        let clips = images.clone().reshape(&[self.videos, self.t, 3, s, s])?;
        let pi = self.di.forward(&images, Mode::Train)?;
        let out = self.dv.forward(&clips, Mode::Train)?;
        let q = out.q.expect("d_a > 0 builds a Q head");
        let loss = bce(&pi, Target::Real) + bce(&out.probs, Target::Real) + info_cross_entropy(&q, &self.classes)?;
        if with_grad {
            let (_, gi) = bce_with_grad(&pi, Target::Real);
            let (_, gv) = bce_with_grad(&out.probs, Target::Real);
            let (_, gq) = info_cross_entropy_with_grad(&q, &self.classes)?;
            let mut d_images = self.di.backward_logits(&gi, GradFlags::ALL)?.expect("input gradient requested");
            let d_clips = self.dv.backward_logits(Some(&gv), Some(&gq), GradFlags::ALL)?.expect("input gradient requested");
            d_images.add_assign(&d_clips.reshape(d_images.shape())?)?;
            let d_latents = self.g.backward(&d_images, GradFlags::ALL)?.expect("input gradient requested");
            self.latents.grad.add_assign(&d_latents)?;
        }
        Ok(loss)
    }
}

/// Runs every check; returns `(case, max relative error)` pairs.
pub fn run_all() -> Result<Vec<(String, f64)>> {
    let mut rng = SeededRng::for_purpose(2024, "acceptance.gradients", 0);
    let layer_cases: Vec<(&str, LayerKind, Vec<usize>)> = vec![
        ("conv2d", LayerKind::Conv2d { in_channels: 3, out_channels: 4, kernel: 4, stride: 2, padding: 1 }, vec![2, 3, 8, 8]),
        ("conv2d_stride1", LayerKind::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, padding: 0 }, vec![2, 2, 5, 6]),
        ("conv_transpose2d", LayerKind::ConvTranspose2d { in_channels: 4, out_channels: 3, kernel: 4, stride: 2, padding: 1 }, vec![2, 4, 4, 4]),
        ("conv_transpose2d_project", LayerKind::ConvTranspose2d { in_channels: 5, out_channels: 4, kernel: 4, stride: 1, padding: 0 }, vec![2, 5, 1, 1]),
        (
            "conv3d",
            LayerKind::Conv3d {
                in_channels: 3,
                out_channels: 2,
                geometry: ConvGeometry { kernel: [4, 4, 4], stride: [1, 2, 2], padding: [1, 1, 1] },
            },
            vec![2, 3, 5, 8, 8],
        ),
        (
            "conv3d_strided",
            LayerKind::Conv3d { in_channels: 2, out_channels: 2, geometry: ConvGeometry::cubic(4, 2, 1) },
            vec![2, 2, 6, 6, 6],
        ),
        ("batch_norm_2d", LayerKind::BatchNorm { channels: 3 }, vec![4, 3, 3, 3]),
        ("batch_norm_3d", LayerKind::BatchNorm { channels: 2 }, vec![3, 2, 2, 3, 3]),
        ("leaky_relu", LayerKind::LeakyRelu { slope: 0.2 }, vec![3, 7]),
        ("sigmoid", LayerKind::Sigmoid, vec![3, 7]),
        ("tanh", LayerKind::Tanh, vec![3, 7]),
        ("softmax", LayerKind::Softmax, vec![4, 5]),
        ("linear", LayerKind::Linear { in_features: 6, out_features: 4 }, vec![3, 6]),
    ];
    let mut results = Vec::new();
    for (name, kind, shape) in layer_cases {
        let mut case = layer_case(kind, &shape, &mut rng).with_context(|| format!("building {name}"))?;
        let report = grad_check(&mut case, STEP)?;
        results.push((name.to_string(), report.max_rel_error));
    }

    let (din, dh, n) = (5, 4, 3);
    let mut cell = GruCell::new(din, dh, "gru");
    randomize(cell.params_mut(), &mut rng, 0.5);
    let xs = (0..4).map(|k| random_param(&format!("x{k}"), &[n, din], &mut rng, 1.0)).collect();
    let h0 = random_param("h0", &[n, dh], &mut rng, 0.5);
    let coef = (0..4).map(|_| (0..n * dh).map(|_| rng.normal()).collect()).collect();
    let mut gru = GruCase { cell, xs, h0, coef };
    results.push(("gru_cell_bptt".into(), grad_check(&mut gru, STEP)?.max_rel_error));

    for target in [Target::Real, Target::Fake] {
        let mut pipe = MiniPipeline::new(target, &mut rng)?;
        let err = grad_check(&mut pipe, STEP)?.max_rel_error;
        results.push((format!("g_to_d_8x8_bce_{target:?}").to_lowercase(), err));
    }

    let mut full = FullNetworks::new(&mut rng)?;
    results.push(("generator_and_discriminators_16x16".into(), grad_check(&mut full, STEP)?.max_rel_error));
    Ok(results)
}
