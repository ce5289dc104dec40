use super::ArchConfig;
use crate::backend::{Buffer, GradFlags, LayerKind, Mode, Param, Scalar, Sequential, Tensor, LEAKY_RELU_SLOPE};
use crate::{Error, Result};

/// Maps a `[N, d]` latent batch to `[N, 3, S, S]` images in `[-1, 1]`.
pub struct ImageGenerator<F: Scalar = f32> {
    layers: Sequential<F>,
    latent_dim: usize,
    image_size: usize,
}

impl<F: Scalar> ImageGenerator<F> {
    /// Zero weights, unit BN scale; see [`super::init_params`].
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let (k0, n_up) = arch.generator_plan()?;
        let nf = arch.base_channels;
        let mut layers = Sequential::new("g");
        let mut channels = nf << (n_up - 1);
        layers.add(LayerKind::ConvTranspose2d {
            in_channels: arch.latent_dim,
            out_channels: channels,
            kernel: k0,
            stride: 1,
            padding: 0,
        })?;
        layers.add(LayerKind::BatchNorm { channels })?;
        layers.add(LayerKind::LeakyRelu { slope: LEAKY_RELU_SLOPE })?;
        for i in 1..=n_up {
            let last = i == n_up;
            let out = if last { 3 } else { channels / 2 };
            layers.add(LayerKind::ConvTranspose2d {
                in_channels: channels,
                out_channels: out,
                kernel: 4,
                stride: 2,
                padding: 1,
            })?;
            if last {
                layers.add(LayerKind::Tanh)?;
            } else {
                layers.add(LayerKind::BatchNorm { channels: out })?;
                layers.add(LayerKind::LeakyRelu { slope: LEAKY_RELU_SLOPE })?;
            }
            channels = out;
        }
        Ok(ImageGenerator {
            layers,
            latent_dim: arch.latent_dim,
            image_size: arch.image_size,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn forward(&mut self, latents: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        if latents.rank() != 2 || latents.dim(1) != self.latent_dim {
            return Err(Error::Shape(format!(
                "generator expects [N, {}] latents, got {:?}",
                self.latent_dim,
                latents.shape()
            )));
        }
        let n = latents.dim(0);
        let x = latents.clone().reshape(&[n, self.latent_dim, 1, 1])?;
        self.layers.forward(&x, mode)
    }

    /// Returns dL/d(latents) as `[N, d]` when `flags.input` is set.
    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        match self.layers.backward(dy, flags)? {
            Some(g) => {
                let n = g.dim(0);
                Ok(Some(g.reshape(&[n, self.latent_dim])?))
            }
            None => Ok(None),
        }
    }

    pub fn layers(&self) -> &Sequential<F> {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        self.layers.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        self.layers.params_mut()
    }

    pub fn buffers(&self) -> Vec<&Buffer<F>> {
        self.layers.buffers()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.layers.buffers_mut()
    }

    pub fn describe(&self) -> Vec<String> {
        self.layers.describe()
    }
}
