use super::{swap_axes, ArchConfig, DvMode};
use crate::backend::{
    Buffer, ConvGeometry, GradFlags, Layer, LayerKind, Mode, Param, Scalar, Sequential, Tensor, LEAKY_RELU_SLOPE,
};
use crate::{Error, Result};

/// Maps `[N, 3, S, S]` images to a `[N, 1, S/16, S/16]` probability grid.
///
/// The input layer has no batch norm. Real and fake batches are normalized
/// separately, so batch norm there would erase any color or brightness
/// offset shared by a whole fake batch.
pub struct ImageDiscriminator<F: Scalar = f32> {
    layers: Sequential<F>,
    image_size: usize,
}

impl<F: Scalar> ImageDiscriminator<F> {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let nf = arch.base_channels;
        let mut layers = Sequential::new("di");
        let mut channels = 3;
        for (i, out) in [nf, 2 * nf, 4 * nf].into_iter().enumerate() {
            layers.add(LayerKind::Conv2d {
                in_channels: channels,
                out_channels: out,
                kernel: 4,
                stride: 2,
                padding: 1,
            })?;
            if i > 0 {
                layers.add(LayerKind::BatchNorm { channels: out })?;
            }
            layers.add(LayerKind::LeakyRelu { slope: LEAKY_RELU_SLOPE })?;
            channels = out;
        }
        layers.add(LayerKind::Conv2d {
            in_channels: channels,
            out_channels: 1,
            kernel: 4,
            stride: 2,
            padding: 1,
        })?;
        layers.add(LayerKind::Sigmoid)?;
        Ok(ImageDiscriminator {
            layers,
            image_size: arch.image_size,
        })
    }

    pub fn forward(&mut self, images: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let s = self.image_size;
        if images.rank() != 4 || images.shape()[1..] != [3, s, s] {
            return Err(Error::Shape(format!(
                "image discriminator expects [N, 3, {s}, {s}], got {:?}",
                images.shape()
            )));
        }
        self.layers.forward(images, mode)
    }

    /// Backward from the gradient with respect to the pre-sigmoid logits.
    pub fn backward_logits(&mut self, d_logits: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let end = self.layers.len() - 1;
        self.layers.backward_through(end, d_logits, flags)
    }

    /// Backward from the gradient with respect to the output probabilities.
    pub fn backward(&mut self, d_probs: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        self.layers.backward(d_probs, flags)
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

/// Three 3-D conv blocks (conv, BN, LeakyReLU; no BN on the input block) on
/// `[N, 3, T, S, S]` volumes.
/// Shared by the video discriminator and the action classifier.
pub fn video_trunk<F: Scalar>(prefix: &str, nf: usize, mode: DvMode) -> Result<Sequential<F>> {
    let mut trunk = Sequential::new(prefix);
    let geometries = match mode {
        DvMode::Downsample => [
            ConvGeometry {
                kernel: [4; 3],
                stride: [1, 2, 2],
                padding: [1; 3],
            },
            ConvGeometry::cubic(4, 2, 1),
            ConvGeometry::cubic(4, 2, 1),
        ],
        DvMode::TableLiteral => [ConvGeometry::cubic(4, 1, 0); 3],
    };
    let mut channels = 3;
    for (i, (out, geometry)) in [nf, 2 * nf, 4 * nf].into_iter().zip(geometries).enumerate() {
        trunk.add(LayerKind::Conv3d {
            in_channels: channels,
            out_channels: out,
            geometry,
        })?;
        if i > 0 {
            trunk.add(LayerKind::BatchNorm { channels: out })?;
        }
        trunk.add(LayerKind::LeakyRelu { slope: LEAKY_RELU_SLOPE })?;
        channels = out;
    }
    Ok(trunk)
}

/// `[C, T, H, W]` after every conv of `trunk` applied to a `[3, t, s, s]` volume.
pub fn trunk_output_dims<F: Scalar>(trunk: &Sequential<F>, t: usize, s: usize) -> Result<[usize; 4]> {
    let mut c = 3;
    let mut dims = [t, s, s];
    for layer in trunk.layers() {
        if let Layer::Conv(conv) = layer {
            dims = conv.output_dims(dims)?;
            c = conv.out_channels();
        }
    }
    Ok([c, dims[0], dims[1], dims[2]])
}

pub struct VideoDiscOutput<F: Scalar = f32> {
    /// `[N, 1, t', h', w']` probabilities.
    pub probs: Tensor<F>,
    /// `[N, d_A]` class probabilities when the Q head is present.
    pub q: Option<Tensor<F>>,
}

/// Video discriminator over `[N, T, 3, S, S]` clips, with an optional
/// softmax Q head on the last feature layer.
pub struct VideoDiscriminator<F: Scalar = f32> {
    trunk: Sequential<F>,
    head: Sequential<F>,
    q: Option<Sequential<F>>,
    t: usize,
    image_size: usize,
    d_a: usize,
}

impl<F: Scalar> VideoDiscriminator<F> {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let nf = arch.base_channels;
        let trunk = video_trunk("dv.trunk", nf, arch.dv_mode)?;
        let [c, t_rem, h_rem, w_rem] = trunk_output_dims(&trunk, arch.t, arch.image_size)?;
        let geometry = match arch.dv_mode {
            DvMode::Downsample => ConvGeometry {
                kernel: [t_rem.min(4), 4, 4],
                stride: [1, 2, 2],
                padding: [0, 1, 1],
            },
            DvMode::TableLiteral => ConvGeometry::cubic(4, 1, 0),
        };
        let mut head = Sequential::new("dv.head");
        head.add(LayerKind::Conv3d {
            in_channels: c,
            out_channels: 1,
            geometry,
        })?;
        head.add(LayerKind::Sigmoid)?;
        if let Some(Layer::Conv(conv)) = head.layers().first() {
            conv.output_dims([t_rem, h_rem, w_rem])?;
        }
        let q = if arch.d_a > 0 {
            let mut q = Sequential::new("dv.q");
            q.add(LayerKind::Linear {
                in_features: c * t_rem * h_rem * w_rem,
                out_features: arch.d_a,
            })?;
            q.add(LayerKind::Softmax)?;
            Some(q)
        } else {
            None
        };
        Ok(VideoDiscriminator {
            trunk,
            head,
            q,
            t: arch.t,
            image_size: arch.image_size,
            d_a: arch.d_a,
        })
    }

    pub fn clip_len(&self) -> usize {
        self.t
    }

    pub fn has_q(&self) -> bool {
        self.q.is_some()
    }

    pub fn forward(&mut self, clips: &Tensor<F>, mode: Mode) -> Result<VideoDiscOutput<F>> {
        let (t, s) = (self.t, self.image_size);
        if clips.rank() != 5 || clips.shape()[1..] != [t, 3, s, s] {
            return Err(Error::Shape(format!(
                "video discriminator expects [N, {t}, 3, {s}, {s}] clips, got {:?}",
                clips.shape()
            )));
        }
        let n = clips.dim(0);
        let volume = Tensor::from_vec(&[n, 3, t, s, s], swap_axes(clips.data(), n, t, 3, s * s))?;
        let features = self.trunk.forward(&volume, mode)?;
        let probs = self.head.forward(&features, mode)?;
        let q = match &mut self.q {
            Some(q) => Some(q.forward(&features, mode)?),
            None => None,
        };
        Ok(VideoDiscOutput { probs, q })
    }

    /// Backward from gradients with respect to the realism logits and the Q
    /// logits (both pre-activation). Returns dL/d(clips) as `[N, T, 3, S, S]`
    /// when `flags.input` is set.
    pub fn backward_logits(
        &mut self,
        d_logits: Option<&Tensor<F>>,
        d_q_logits: Option<&Tensor<F>>,
        flags: GradFlags,
    ) -> Result<Option<Tensor<F>>> {
        let branch = GradFlags {
            params: flags.params,
            input: true,
        };
        let mut d_features: Option<Tensor<F>> = None;
        if let Some(d) = d_logits {
            d_features = self.head.backward_through(1, d, branch)?;
        }
        if let Some(d) = d_q_logits {
            let q = self
                .q
                .as_mut()
                .ok_or_else(|| Error::Shape("video discriminator has no Q head".into()))?;
            let g = q
                .backward_through(1, d, branch)?
                .ok_or_else(|| Error::Shape("Q head produced no input gradient".into()))?;
            match &mut d_features {
                Some(acc) => acc.add_assign(&g)?,
                None => d_features = Some(g),
            }
        }
        let d_features = d_features.ok_or_else(|| Error::Shape("video discriminator backward got no gradient".into()))?;
        match self.trunk.backward(&d_features, flags)? {
            Some(g) => {
                let (n, t, s) = (g.dim(0), self.t, self.image_size);
                Ok(Some(Tensor::from_vec(&[n, t, 3, s, s], swap_axes(g.data(), n, 3, t, s * s))?))
            }
            None => Ok(None),
        }
    }

    pub fn q_classes(&self) -> usize {
        self.d_a
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        if let Some(q) = &self.q {
            p.extend(q.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head.params_mut());
        if let Some(q) = &mut self.q {
            p.extend(q.params_mut());
        }
        p
    }

    pub fn buffers(&self) -> Vec<&Buffer<F>> {
        self.trunk.buffers()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.trunk.buffers_mut()
    }

    /// Trunk and realism head layers; the Q head is listed separately.
    pub fn describe(&self) -> Vec<String> {
        let mut d = self.trunk.describe();
        d.extend(self.head.describe());
        d
    }

    pub fn describe_q(&self) -> Option<Vec<String>> {
        self.q.as_ref().map(|q| q.describe())
    }
}
