use super::{
    BatchNorm, Buffer, Conv, ConvGeometry, ConvKind, GradFlags, LeakyRelu, Linear, Mode, Param, Scalar,
    Sigmoid, Softmax, Tanh, Tensor,
};
use crate::Result;

/// Hyper-parameters of one layer of the supported vocabulary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    },
    BatchNorm {
        channels: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Tanh,
    Softmax,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

pub enum Layer<F: Scalar = f32> {
    Conv(Conv<F>),
    BatchNorm(BatchNorm<F>),
    LeakyRelu(LeakyRelu<F>),
    Sigmoid(Sigmoid<F>),
    Tanh(Tanh<F>),
    Softmax(Softmax<F>),
    Linear(Linear<F>),
}

impl<F: Scalar> Layer<F> {
    /// Builds a layer with zero weights (and unit BN scale); callers initialize.
    pub fn new(kind: LayerKind, name: &str) -> Result<Self> {
        Ok(match kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv(Conv::new(
                ConvKind::Conv2d,
                in_channels,
                out_channels,
                ConvGeometry::planar(kernel, stride, padding),
                name,
            )?),
            LayerKind::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv(Conv::new(
                ConvKind::ConvTranspose2d,
                in_channels,
                out_channels,
                ConvGeometry::planar(kernel, stride, padding),
                name,
            )?),
            LayerKind::Conv3d {
                in_channels,
                out_channels,
                geometry,
            } => Layer::Conv(Conv::new(ConvKind::Conv3d, in_channels, out_channels, geometry, name)?),
            LayerKind::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels, name)),
            LayerKind::LeakyRelu { slope } => Layer::LeakyRelu(LeakyRelu::new(slope)),
            LayerKind::Sigmoid => Layer::Sigmoid(Sigmoid::new()),
            LayerKind::Tanh => Layer::Tanh(Tanh::new()),
            LayerKind::Softmax => Layer::Softmax(Softmax::new()),
            LayerKind::Linear {
                in_features,
                out_features,
            } => Layer::Linear(Linear::new(in_features, out_features, name)),
        })
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::LeakyRelu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Tanh(l) => Ok(l.forward(x)),
            Layer::Softmax(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        match self {
            Layer::Conv(l) => l.backward(dy, flags),
            Layer::BatchNorm(l) => l.backward(dy, flags),
            Layer::LeakyRelu(l) => l.backward(dy, flags),
            Layer::Sigmoid(l) => l.backward(dy, flags),
            Layer::Tanh(l) => l.backward(dy, flags),
            Layer::Softmax(l) => l.backward(dy, flags),
            Layer::Linear(l) => l.backward(dy, flags),
        }
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn buffers(&self) -> Vec<&Buffer<F>> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }

    fn rename(&mut self, name: &str) {
        match self {
            Layer::Conv(l) => l.rename(name),
            Layer::BatchNorm(l) => l.rename(name),
            Layer::Linear(l) => l.rename(name),
            _ => {}
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Layer::Conv(l) => l.describe(),
            Layer::BatchNorm(_) => "BN".into(),
            Layer::LeakyRelu(_) => "LeakyReLU".into(),
            Layer::Sigmoid(_) => "Sigmoid".into(),
            Layer::Tanh(_) => "Tanh".into(),
            Layer::Softmax(_) => "Softmax".into(),
            Layer::Linear(l) => format!("LINEAR-(N{})", l.out_features()),
        }
    }
}

/// Runs one layer forward; the free-function form of [`Layer::forward`].
pub fn layer_forward<F: Scalar>(layer: &mut Layer<F>, input: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
    layer.forward(input, mode)
}

/// A chain of layers whose parameters are named `<prefix>.<index>.<param>`.
pub struct Sequential<F: Scalar = f32> {
    prefix: String,
    layers: Vec<Layer<F>>,
}

impl<F: Scalar> Sequential<F> {
    pub fn new(prefix: impl Into<String>) -> Self {
        Sequential {
            prefix: prefix.into(),
            layers: Vec::new(),
        }
    }

    pub fn push(&mut self, mut layer: Layer<F>) {
        layer.rename(&format!("{}.{}", self.prefix, self.layers.len()));
        self.layers.push(layer);
    }

    pub fn add(&mut self, kind: LayerKind) -> Result<()> {
        let layer = Layer::new(kind, &format!("{}.{}", self.prefix, self.layers.len()))?;
        self.layers.push(layer);
        Ok(())
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let end = self.layers.len();
        self.backward_through(end, dy, flags)
    }

    /// Backpropagates `dy`, the gradient at the output of layer `end - 1`,
    /// through layers `end - 1, ..., 0`.
    pub fn backward_through(
        &mut self,
        end: usize,
        dy: &Tensor<F>,
        flags: GradFlags,
    ) -> Result<Option<Tensor<F>>> {
        let mut grad = dy.clone();
        for i in (0..end).rev() {
            let layer_flags = GradFlags {
                params: flags.params,
                input: i > 0 || flags.input,
            };
            match self.layers[i].backward(&grad, layer_flags)? {
                Some(g) => grad = g,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer<F>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<F>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    pub fn describe(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.describe()).collect()
    }
}
