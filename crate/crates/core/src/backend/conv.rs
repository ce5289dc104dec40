use super::{batch_to_channel_major, channel_to_batch_major, gemm, GradFlags, Mode, Param, Scalar, Tensor};
use crate::{Error, Result};

/// Output length of a strided convolution: `floor((in + 2p - k) / s) + 1`.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "kernel ({kernel}) and stride ({stride}) must be positive"
        )));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::Config(format!(
            "convolution output is empty: input {input}, kernel {kernel}, stride {stride}, padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output length of a transposed convolution: `(in - 1) * s - 2p + k`.
pub fn conv_transpose_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if kernel == 0 || stride == 0 || input == 0 {
        return Err(Error::Config(format!(
            "input ({input}), kernel ({kernel}) and stride ({stride}) must be positive"
        )));
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * padding {
        return Err(Error::Config(format!(
            "transposed convolution output is empty: input {input}, kernel {kernel}, stride {stride}, padding {padding}"
        )));
    }
    Ok(full - 2 * padding)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    Conv2d,
    ConvTranspose2d,
    Conv3d,
}

/// Kernel, stride and padding per spatial axis in `[depth, height, width]` order.
///
/// Two-dimensional layers use a unit depth kernel with unit stride and no padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn planar(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            kernel: [1, kernel, kernel],
            stride: [1, stride, stride],
            padding: [0, padding, padding],
        }
    }

    pub fn cubic(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            kernel: [kernel; 3],
            stride: [stride; 3],
            padding: [padding; 3],
        }
    }

    fn volume(&self) -> usize {
        self.kernel.iter().product()
    }
}

/// Shapes shared by `im2col` and `col2im`.
///
/// `input` is the side the kernel slides over, `output` the side with one
/// column per kernel placement.
#[derive(Clone, Copy, Debug)]
struct Patches {
    channels: usize,
    input: [usize; 3],
    output: [usize; 3],
    geo: ConvGeometry,
}

impl Patches {
    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn rows(&self) -> usize {
        self.channels * self.geo.volume()
    }
}

/// Range of output positions `o` with `0 <= o * stride + offset < in_len`.
fn valid_range(out_len: usize, stride: usize, offset: isize, in_len: usize) -> (usize, usize) {
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    let top = in_len as isize - 1 - offset;
    let hi = if top < 0 {
        0
    } else {
        (top as usize / stride + 1).min(out_len)
    };
    (lo.min(hi), hi)
}

/// Offsets of each stride phase within a row of `len` elements reordered as
/// `[x[0], x[s], x[2s], ..., x[1], x[1+s], ...]`.
fn phase_offsets(len: usize, stride: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(stride);
    let mut acc = 0;
    for r in 0..stride {
        offsets.push(acc);
        acc += (len + stride - 1 - r) / stride;
    }
    offsets
}

/// Reorders every `len`-element row of `x` into stride phases, so that a
/// strided gather along the row becomes a contiguous slice.
fn to_phases<F: Scalar>(x: &[F], len: usize, stride: usize) -> Vec<F> {
    let offsets = phase_offsets(len, stride);
    let mut out = vec![F::zero(); x.len()];
    for (src, dst) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
        for (q, &v) in src.iter().enumerate() {
            dst[offsets[q % stride] + q / stride] = v;
        }
    }
    out
}

/// Inverse of [`to_phases`], accumulating into `x`.
fn add_from_phases<F: Scalar>(phased: &[F], len: usize, stride: usize, x: &mut [F]) {
    let offsets = phase_offsets(len, stride);
    for (src, dst) in phased.chunks_exact(len).zip(x.chunks_exact_mut(len)) {
        for (q, d) in dst.iter_mut().enumerate() {
            *d += src[offsets[q % stride] + q / stride];
        }
    }
}

/// Unfolds `x: [n, C, D, H, W]` into `col: [C * kvol, n * L]`.
///
/// `col` must be zero on entry; entries that fall into the padding are left
/// untouched.
fn im2col<F: Scalar>(x: &[F], n: usize, p: &Patches, col: &mut [F]) {
    let [kd, kh, kw] = p.geo.kernel;
    let [sd, sh, sw] = p.geo.stride;
    let [pd, ph, pw] = p.geo.padding;
    let [id, ih, iw] = p.input;
    let [od, oh, ow] = p.output;
    let lin = p.in_len();
    let lout = p.out_len();
    let ncols = n * lout;
    let phased;
    let x = if sw > 1 {
        phased = to_phases(x, iw, sw);
        &phased[..]
    } else {
        x
    };
    let offsets = phase_offsets(iw, sw);
    for c in 0..p.channels {
        for a in 0..kd {
            let (d_lo, d_hi) = valid_range(od, sd, a as isize - pd as isize, id);
            for b in 0..kh {
                let (h_lo, h_hi) = valid_range(oh, sh, b as isize - ph as isize, ih);
                for e in 0..kw {
                    let (w_lo, w_hi) = valid_range(ow, sw, e as isize - pw as isize, iw);
                    if w_lo >= w_hi {
                        continue;
                    }
                    let width = w_hi - w_lo;
                    let row = ((c * kd + a) * kh + b) * kw + e;
                    let row_buf = &mut col[row * ncols..(row + 1) * ncols];
                    let q0 = w_lo * sw + e - pw;
                    let start = offsets[q0 % sw] + q0 / sw;
                    for s in 0..n {
                        let xs = &x[(s * p.channels + c) * lin..][..lin];
                        let out = &mut row_buf[s * lout..(s + 1) * lout];
                        for zd in d_lo..d_hi {
                            let zi = zd * sd + a - pd;
                            for y in h_lo..h_hi {
                                let yi = y * sh + b - ph;
                                let src = &xs[(zi * ih + yi) * iw + start..][..width];
                                let dst = &mut out[(zd * oh + y) * ow + w_lo..][..width];
                                dst.copy_from_slice(src);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back into `x`, accumulating overlaps.
fn col2im<F: Scalar>(col: &[F], n: usize, p: &Patches, x: &mut [F]) {
    let [kd, kh, kw] = p.geo.kernel;
    let [sd, sh, sw] = p.geo.stride;
    let [pd, ph, pw] = p.geo.padding;
    let [id, ih, iw] = p.input;
    let [od, oh, ow] = p.output;
    let lin = p.in_len();
    let lout = p.out_len();
    let ncols = n * lout;
    let mut phased = if sw > 1 { vec![F::zero(); x.len()] } else { Vec::new() };
    let offsets = phase_offsets(iw, sw);
    {
        let target: &mut [F] = if sw > 1 { &mut phased } else { &mut *x };
        for c in 0..p.channels {
            for a in 0..kd {
                let (d_lo, d_hi) = valid_range(od, sd, a as isize - pd as isize, id);
                for b in 0..kh {
                    let (h_lo, h_hi) = valid_range(oh, sh, b as isize - ph as isize, ih);
                    for e in 0..kw {
                        let (w_lo, w_hi) = valid_range(ow, sw, e as isize - pw as isize, iw);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let width = w_hi - w_lo;
                        let row = ((c * kd + a) * kh + b) * kw + e;
                        let row_buf = &col[row * ncols..(row + 1) * ncols];
                        let q0 = w_lo * sw + e - pw;
                        let start = offsets[q0 % sw] + q0 / sw;
                        for s in 0..n {
                            let xs = &mut target[(s * p.channels + c) * lin..][..lin];
                            let src = &row_buf[s * lout..(s + 1) * lout];
                            for zd in d_lo..d_hi {
                                let zi = zd * sd + a - pd;
                                for y in h_lo..h_hi {
                                    let yi = y * sh + b - ph;
                                    let line = &src[(zd * oh + y) * ow + w_lo..][..width];
                                    let dst = &mut xs[(zi * ih + yi) * iw + start..][..width];
                                    for (d, v) in dst.iter_mut().zip(line) {
                                        *d += *v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if sw > 1 {
        add_from_phases(&phased, iw, sw, x);
    }
}

struct ConvCache<F> {
    n: usize,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    /// The layer input; unfolded patches are recomputed chunk by chunk.
    input: Vec<F>,
}

/// Upper bound on the elements of one unfolded chunk, so that the patch
/// matrix stays cache-resident instead of spanning the whole batch.
const CHUNK_ELEMENTS: usize = 1 << 19;

fn chunk_len(n: usize, per_sample: usize) -> usize {
    (CHUNK_ELEMENTS / per_sample.max(1)).clamp(1, n.max(1))
}

/// 2-D, transposed 2-D and 3-D convolution with bias.
///
/// Weight layouts: `[out, in, k...]` for convolutions, `[in, out, kh, kw]`
/// for the transposed layer.
pub struct Conv<F: Scalar = f32> {
    kind: ConvKind,
    in_channels: usize,
    out_channels: usize,
    geometry: ConvGeometry,
    pub weight: Param<F>,
    pub bias: Param<F>,
    cache: Option<ConvCache<F>>,
}

impl<F: Scalar> Conv<F> {
    pub fn new(
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        name: &str,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("convolution channels must be positive".into()));
        }
        if geometry.kernel.contains(&0) || geometry.stride.contains(&0) {
            return Err(Error::Config(format!(
                "kernel and stride must be positive: {geometry:?}"
            )));
        }
        let planar = kind != ConvKind::Conv3d;
        if planar && (geometry.kernel[0] != 1 || geometry.stride[0] != 1 || geometry.padding[0] != 0) {
            return Err(Error::Config(format!(
                "2-D convolution with a depth component: {geometry:?}"
            )));
        }
        let [kd, kh, kw] = geometry.kernel;
        let wshape: Vec<usize> = match kind {
            ConvKind::Conv2d => vec![out_channels, in_channels, kh, kw],
            ConvKind::ConvTranspose2d => vec![in_channels, out_channels, kh, kw],
            ConvKind::Conv3d => vec![out_channels, in_channels, kd, kh, kw],
        };
        Ok(Conv {
            kind,
            in_channels,
            out_channels,
            geometry,
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&wshape)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            cache: None,
        })
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geometry
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub(crate) fn rename(&mut self, name: &str) {
        self.weight.name = format!("{name}.weight");
        self.bias.name = format!("{name}.bias");
    }

    /// Spatial output dimensions `[d, h, w]` for spatial input `[d, h, w]`.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let g = &self.geometry;
        let mut out = [0; 3];
        for i in 0..3 {
            out[i] = match self.kind {
                ConvKind::ConvTranspose2d if i > 0 => {
                    conv_transpose_out_dim(input[i], g.kernel[i], g.stride[i], g.padding[i])?
                }
                _ => conv_out_dim(input[i], g.kernel[i], g.stride[i], g.padding[i])?,
            };
        }
        Ok(out)
    }

    /// Output shape for a full input shape (batch and channel axes included).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (n, dims) = self.parse_input(input)?;
        let out = self.output_dims(dims)?;
        Ok(self.full_shape(n, self.out_channels, out))
    }

    fn full_shape(&self, n: usize, c: usize, dims: [usize; 3]) -> Vec<usize> {
        match self.kind {
            ConvKind::Conv3d => vec![n, c, dims[0], dims[1], dims[2]],
            _ => vec![n, c, dims[1], dims[2]],
        }
    }

    fn parse_input(&self, shape: &[usize]) -> Result<(usize, [usize; 3])> {
        let (rank, dims) = match self.kind {
            ConvKind::Conv3d => (5, shape.get(2..5).map(|d| [d[0], d[1], d[2]])),
            _ => (4, shape.get(2..4).map(|d| [1, d[0], d[1]])),
        };
        if shape.len() != rank || shape[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "{} expects [N, {}, ...] of rank {rank}, got {shape:?}",
                self.describe(),
                self.in_channels
            )));
        }
        Ok((shape[0], dims.expect("rank checked")))
    }

    fn patches(&self, in_dims: [usize; 3], out_dims: [usize; 3]) -> Patches {
        match self.kind {
            ConvKind::Conv2d | ConvKind::Conv3d => Patches {
                channels: self.in_channels,
                input: in_dims,
                output: out_dims,
                geo: self.geometry,
            },
            // The transposed layer is the adjoint of a convolution from the
            // output grid back onto the input grid.
            ConvKind::ConvTranspose2d => Patches {
                channels: self.out_channels,
                input: out_dims,
                output: in_dims,
                geo: self.geometry,
            },
        }
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let (n, in_dims) = self.parse_input(x.shape())?;
        let out_dims = self.output_dims(in_dims)?;
        let lin: usize = in_dims.iter().product();
        let lout: usize = out_dims.iter().product();
        let (cin, cout) = (self.in_channels, self.out_channels);
        let out_shape = self.full_shape(n, cout, out_dims);
        let p = self.patches(in_dims, out_dims);
        let rows = p.rows();
        let w = self.weight.value.data();
        let mut y = vec![F::zero(); n * cout * lout];
        match self.kind {
            ConvKind::Conv2d | ConvKind::Conv3d => {
                let step = chunk_len(n, rows * lout);
                let mut col = vec![F::zero(); rows * step * lout];
                for s0 in (0..n).step_by(step) {
                    let m = step.min(n - s0);
                    let col = &mut col[..rows * m * lout];
                    col.fill(F::zero());
                    im2col(&x.data()[s0 * cin * lin..(s0 + m) * cin * lin], m, &p, col);
                    for s in 0..m {
                        gemm(
                            cout,
                            rows,
                            lout,
                            F::one(),
                            w,
                            false,
                            rows,
                            &col[s * lout..],
                            false,
                            m * lout,
                            F::zero(),
                            &mut y[(s0 + s) * cout * lout..],
                            lout,
                        );
                    }
                }
            }
            ConvKind::ConvTranspose2d => {
                let step = chunk_len(n, rows * lin);
                let mut col = vec![F::zero(); rows * step * lin];
                for s0 in (0..n).step_by(step) {
                    let m = step.min(n - s0);
                    let xr = batch_to_channel_major(&x.data()[s0 * cin * lin..(s0 + m) * cin * lin], m, cin, lin);
                    let col = &mut col[..rows * m * lin];
                    gemm(
                        rows,
                        cin,
                        m * lin,
                        F::one(),
                        w,
                        true,
                        rows,
                        &xr,
                        false,
                        m * lin,
                        F::zero(),
                        col,
                        m * lin,
                    );
                    col2im(col, m, &p, &mut y[s0 * cout * lout..(s0 + m) * cout * lout]);
                }
            }
        }
        let b = self.bias.value.data();
        for s in 0..n {
            for c in 0..cout {
                let bc = b[c];
                for v in &mut y[(s * cout + c) * lout..][..lout] {
                    *v += bc;
                }
            }
        }
        self.cache = match mode {
            Mode::Eval => None,
            _ => Some(ConvCache {
                n,
                in_dims,
                out_dims,
                input: x.data().to_vec(),
            }),
        };
        Tensor::from_vec(&out_shape, y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>, flags: GradFlags) -> Result<Option<Tensor<F>>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::Shape(format!("{}: backward without a training forward pass", self.describe()))
        })?;
        let (n, in_dims, out_dims) = (cache.n, cache.in_dims, cache.out_dims);
        let expected = self.full_shape(n, self.out_channels, out_dims);
        if dy.shape() != expected.as_slice() {
            return Err(Error::Shape(format!(
                "{}: gradient shape {:?} != output shape {expected:?}",
                self.describe(),
                dy.shape()
            )));
        }
        let lin: usize = in_dims.iter().product();
        let lout: usize = out_dims.iter().product();
        let (cin, cout) = (self.in_channels, self.out_channels);
        let p = self.patches(in_dims, out_dims);
        let rows = p.rows();
        let x = &cache.input;
        let dyd = dy.data();

        if flags.params {
            let db = self.bias.grad.data_mut();
            for s in 0..n {
                for c in 0..cout {
                    db[c] += dyd[(s * cout + c) * lout..][..lout].iter().copied().sum();
                }
            }
        }
        let mut dx = flags.input.then(|| vec![F::zero(); n * cin * lin]);
        match self.kind {
            ConvKind::Conv2d | ConvKind::Conv3d => {
                let step = chunk_len(n, rows * lout);
                let mut col = vec![F::zero(); rows * step * lout];
                for s0 in (0..n).step_by(step) {
                    let m = step.min(n - s0);
                    let dyr = batch_to_channel_major(&dyd[s0 * cout * lout..(s0 + m) * cout * lout], m, cout, lout);
                    let col = &mut col[..rows * m * lout];
                    if flags.params {
                        col.fill(F::zero());
                        im2col(&x[s0 * cin * lin..(s0 + m) * cin * lin], m, &p, col);
                        gemm(
                            cout,
                            m * lout,
                            rows,
                            F::one(),
                            &dyr,
                            false,
                            m * lout,
                            col,
                            true,
                            m * lout,
                            F::one(),
                            self.weight.grad.data_mut(),
                            rows,
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(
                            rows,
                            cout,
                            m * lout,
                            F::one(),
                            self.weight.value.data(),
                            true,
                            rows,
                            &dyr,
                            false,
                            m * lout,
                            F::zero(),
                            col,
                            m * lout,
                        );
                        col2im(col, m, &p, &mut dx[s0 * cin * lin..(s0 + m) * cin * lin]);
                    }
                }
            }
            ConvKind::ConvTranspose2d => {
                let step = chunk_len(n, rows * lin);
                let mut dcol = vec![F::zero(); rows * step * lin];
                for s0 in (0..n).step_by(step) {
                    let m = step.min(n - s0);
                    let dcol = &mut dcol[..rows * m * lin];
                    dcol.fill(F::zero());
                    im2col(&dyd[s0 * cout * lout..(s0 + m) * cout * lout], m, &p, dcol);
                    if flags.params {
                        let xr = batch_to_channel_major(&x[s0 * cin * lin..(s0 + m) * cin * lin], m, cin, lin);
                        gemm(
                            cin,
                            m * lin,
                            rows,
                            F::one(),
                            &xr,
                            false,
                            m * lin,
                            dcol,
                            true,
                            m * lin,
                            F::one(),
                            self.weight.grad.data_mut(),
                            rows,
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        let mut dxr = vec![F::zero(); cin * m * lin];
                        gemm(
                            cin,
                            rows,
                            m * lin,
                            F::one(),
                            self.weight.value.data(),
                            false,
                            rows,
                            dcol,
                            false,
                            m * lin,
                            F::zero(),
                            &mut dxr,
                            m * lin,
                        );
                        dx[s0 * cin * lin..(s0 + m) * cin * lin]
                            .copy_from_slice(&channel_to_batch_major(&dxr, m, cin, lin));
                    }
                }
            }
        }
        match dx {
            Some(dx) => Ok(Some(Tensor::from_vec(&self.full_shape(n, cin, in_dims), dx)?)),
            None => Ok(None),
        }
    }

    /// Layer label in the `CONV-(N, K, S, P)` notation of architecture tables.
    pub fn describe(&self) -> String {
        let tag = match self.kind {
            ConvKind::Conv2d => "CONV",
            ConvKind::ConvTranspose2d => "DCONV",
            ConvKind::Conv3d => "CONV3D",
        };
        let axes = if self.kind == ConvKind::Conv3d { 0..3 } else { 1..3 };
        let fmt = |v: [usize; 3]| {
            let vals = &v[axes.clone()];
            if vals.iter().all(|&x| x == vals[0]) {
                vals[0].to_string()
            } else {
                let parts: Vec<String> = vals.iter().map(|x| x.to_string()).collect();
                format!("({})", parts.join(","))
            }
        };
        format!(
            "{tag}-(N{}, K{}, S{}, P{})",
            self.out_channels,
            fmt(self.geometry.kernel),
            fmt(self.geometry.stride),
            fmt(self.geometry.padding)
        )
    }
}
