//! Deterministic forward and vector-Jacobian-product evaluation of small 3D
//! convolutional de-aliasing networks.
//!
//! A network is a plain chain of "same"-padded (zero padding) 3D
//! cross-correlation layers with optional ReLU / leaky-ReLU activations and
//! an optional global residual connection from input to output. Complex
//! volumes travel through the chain as two real channels (re, im). Kernel
//! axes (kd, kh, kw) correspond to volume axes (z, y, x).
//!
//! The VJP is the exact reverse-mode product through the layer stack:
//! activation derivatives (the subgradient at a ReLU kink is taken as 0),
//! then the conv adjoint, which is zero-padded correlation with the
//! spatially flipped kernel and transposed channels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::volume::{voxel_count, ComplexVolume, Dims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::None => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    z
                } else {
                    s * z
                }
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    1.0
                } else {
                    s
                }
            }
        }
    }

    fn is_nonlinear(self) -> bool {
        !matches!(self, Activation::None)
    }
}

/// One convolution layer: weights (out_ch, in_ch, kd, kh, kw) C-order,
/// per-output-channel bias, then activation.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    out_ch: usize,
    in_ch: usize,
    kernel: (usize, usize, usize),
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl ConvLayer {
    pub fn new(
        out_ch: usize,
        in_ch: usize,
        kernel: (usize, usize, usize),
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if out_ch == 0 || in_ch == 0 {
            return Err(Error::Validation("zero channel count".into()));
        }
        let (kd, kh, kw) = kernel;
        if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 || kd == 0 || kh == 0 || kw == 0 {
            return Err(Error::Validation(format!(
                "kernel dims {kernel:?} must all be odd"
            )));
        }
        if weights.len() != out_ch * in_ch * kd * kh * kw {
            return Err(Error::Validation(format!(
                "weight count {} != {}x{}x{}x{}x{}",
                weights.len(),
                out_ch,
                in_ch,
                kd,
                kh,
                kw
            )));
        }
        if bias.len() != out_ch {
            return Err(Error::Validation(format!(
                "bias count {} != out_ch {}",
                bias.len(),
                out_ch
            )));
        }
        if weights.iter().chain(bias.iter()).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("ConvLayer weights".into()));
        }
        if let Activation::LeakyRelu(s) = activation {
            if !s.is_finite() {
                return Err(Error::NonFinite("leaky slope".into()));
            }
        }
        Ok(Self {
            out_ch,
            in_ch,
            kernel,
            weights,
            bias,
            activation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn kernel(&self) -> (usize, usize, usize) {
        self.kernel
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Pre-activation output: same-padded cross-correlation plus bias.
    fn conv(&self, input: &[f64], dims: Dims) -> Vec<f64> {
        let (nx, ny, nz) = dims;
        let n = voxel_count(dims);
        let (kd, kh, kw) = self.kernel;
        let (cd, chh, cw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
        let mut out = vec![0.0f64; self.out_ch * n];
        for o in 0..self.out_ch {
            let plane = &mut out[o * n..(o + 1) * n];
            let b = self.bias[o];
            for v in plane.iter_mut() {
                *v = b;
            }
            for i in 0..self.in_ch {
                let src = &input[i * n..(i + 1) * n];
                let wbase = (o * self.in_ch + i) * kd * kh * kw;
                for dz in 0..kd {
                    let oz = dz as isize - cd;
                    for dy in 0..kh {
                        let oy = dy as isize - chh;
                        for dx in 0..kw {
                            let ox = dx as isize - cw;
                            let w = self.weights[wbase + (dz * kh + dy) * kw + dx];
                            accumulate_shifted(plane, src, (nx, ny, nz), (ox, oy, oz), w);
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`ConvLayer::conv`] without the bias: transposed channels,
    /// negated offsets.
    fn conv_adjoint(&self, grad_out: &[f64], dims: Dims) -> Vec<f64> {
        let (nx, ny, nz) = dims;
        let n = voxel_count(dims);
        let (kd, kh, kw) = self.kernel;
        let (cd, chh, cw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
        let mut out = vec![0.0f64; self.in_ch * n];
        for i in 0..self.in_ch {
            let plane = &mut out[i * n..(i + 1) * n];
            for o in 0..self.out_ch {
                let src = &grad_out[o * n..(o + 1) * n];
                let wbase = (o * self.in_ch + i) * kd * kh * kw;
                for dz in 0..kd {
                    let oz = cd - dz as isize;
                    for dy in 0..kh {
                        let oy = chh - dy as isize;
                        for dx in 0..kw {
                            let ox = cw - dx as isize;
                            let w = self.weights[wbase + (dz * kh + dy) * kw + dx];
                            accumulate_shifted(plane, src, (nx, ny, nz), (ox, oy, oz), w);
                        }
                    }
                }
            }
        }
        out
    }
}

/// plane[p] += w * src[p + offset] over the in-bounds overlap.
fn accumulate_shifted(
    plane: &mut [f64],
    src: &[f64],
    dims: Dims,
    offset: (isize, isize, isize),
    w: f64,
) {
    let (nx, ny, nz) = (dims.0 as isize, dims.1 as isize, dims.2 as isize);
    let (ox, oy, oz) = offset;
    let z_lo = 0.max(-oz);
    let z_hi = nz.min(nz - oz);
    let y_lo = 0.max(-oy);
    let y_hi = ny.min(ny - oy);
    let x_lo = 0.max(-ox);
    let x_hi = nx.min(nx - ox);
    if z_lo >= z_hi || y_lo >= y_hi || x_lo >= x_hi {
        return;
    }
    for z in z_lo..z_hi {
        for y in y_lo..y_hi {
            let row = (nx * (y + ny * z)) as usize;
            let srow = nx * ((y + oy) + ny * (z + oz));
            for x in x_lo..x_hi {
                plane[row + x as usize] += w * src[(srow + x + ox) as usize];
            }
        }
    }
}

/// A validated layer chain with 2 input and 2 output channels (re/im) and an
/// optional global residual connection.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<ConvLayer>,
    global_residual: bool,
}

impl Network {
    pub fn new(layers: Vec<ConvLayer>, global_residual: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        if layers[0].in_ch != 2 {
            return Err(Error::Validation(format!(
                "first layer expects {} input channels, must be 2",
                layers[0].in_ch
            )));
        }
        if layers[layers.len() - 1].out_ch != 2 {
            return Err(Error::Validation(format!(
                "last layer yields {} output channels, must be 2",
                layers[layers.len() - 1].out_ch
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_ch != pair[1].in_ch {
                return Err(Error::Validation(format!(
                    "channel chain broken between layers {} and {}: {} -> {}",
                    i,
                    i + 1,
                    pair[0].out_ch,
                    pair[1].in_ch
                )));
            }
        }
        Ok(Self {
            layers,
            global_residual,
        })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn global_residual(&self) -> bool {
        self.global_residual
    }

    fn chain_forward(&self, input: Vec<f64>, dims: Dims) -> Vec<f64> {
        let mut a = input;
        for layer in &self.layers {
            let mut z = layer.conv(&a, dims);
            for v in z.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            a = z;
        }
        a
    }

    /// Forward pass retaining every pre-activation for the backward sweep.
    fn chain_forward_cached(&self, input: Vec<f64>, dims: Dims) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut a = input;
        for layer in &self.layers {
            let z = layer.conv(&a, dims);
            let mut act = z.clone();
            for v in act.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            preacts.push(z);
            a = act;
        }
        (preacts, a)
    }

    fn chain_vjp(&self, x2: Vec<f64>, grad: Vec<f64>, dims: Dims) -> Vec<f64> {
        let (preacts, _) = self.chain_forward_cached(x2, dims);
        let mut g = grad;
        for (layer, z) in self.layers.iter().zip(preacts.iter()).rev() {
            for (gv, zv) in g.iter_mut().zip(z.iter()) {
                *gv *= layer.activation.derivative(*zv);
            }
            g = layer.conv_adjoint(&g, dims);
        }
        g
    }

    /// G(x): the layer chain, plus the input when the residual flag is set.
    pub fn forward(&self, x: &ComplexVolume) -> Result<ComplexVolume> {
        let dims = x.dims();
        let mut out = self.chain_forward(split_channels(x), dims);
        if self.global_residual {
            add_volume_channels(&mut out, x);
        }
        combine_channels(&out, dims)
    }

    /// J^T v at x, where J is the Jacobian of G.
    pub fn vjp(&self, x: &ComplexVolume, v: &ComplexVolume) -> Result<ComplexVolume> {
        if x.dims() != v.dims() {
            return Err(Error::ShapeMismatch(format!(
                "vjp point {:?} vs direction {:?}",
                x.dims(),
                v.dims()
            )));
        }
        let dims = x.dims();
        let mut g = self.chain_vjp(split_channels(x), split_channels(v), dims);
        if self.global_residual {
            add_volume_channels(&mut g, v);
        }
        combine_channels(&g, dims)
    }

    /// The artifact estimate G(x) - x. For residual networks this is the
    /// branch output before the residual add, so no cancellation occurs.
    pub fn residual_forward(&self, x: &ComplexVolume) -> Result<ComplexVolume> {
        let dims = x.dims();
        let mut out = self.chain_forward(split_channels(x), dims);
        if !self.global_residual {
            sub_volume_channels(&mut out, x);
        }
        combine_channels(&out, dims)
    }

    /// (J - I)^T v at x: the VJP of [`Network::residual_forward`].
    pub fn residual_vjp(&self, x: &ComplexVolume, v: &ComplexVolume) -> Result<ComplexVolume> {
        if x.dims() != v.dims() {
            return Err(Error::ShapeMismatch(format!(
                "residual vjp point {:?} vs direction {:?}",
                x.dims(),
                v.dims()
            )));
        }
        let dims = x.dims();
        let mut g = self.chain_vjp(split_channels(x), split_channels(v), dims);
        if !self.global_residual {
            sub_volume_channels(&mut g, v);
        }
        combine_channels(&g, dims)
    }

    /// Smallest pre-activation magnitude across nonlinear layers; infinity
    /// when the chain is purely linear. Gradient checks use this to stay
    /// away from ReLU kinks.
    pub fn min_abs_preactivation(&self, x: &ComplexVolume) -> f64 {
        let dims = x.dims();
        let (preacts, _) = self.chain_forward_cached(split_channels(x), dims);
        let mut min = f64::INFINITY;
        for (layer, z) in self.layers.iter().zip(preacts.iter()) {
            if layer.activation.is_nonlinear() {
                for v in z {
                    min = min.min(v.abs());
                }
            }
        }
        min
    }
}

fn split_channels(x: &ComplexVolume) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0f64; 2 * n];
    for (i, v) in x.data().iter().enumerate() {
        out[i] = v.re;
        out[n + i] = v.im;
    }
    out
}

fn combine_channels(ch: &[f64], dims: Dims) -> Result<ComplexVolume> {
    let n = voxel_count(dims);
    debug_assert_eq!(ch.len(), 2 * n);
    let data = (0..n).map(|i| Complex64::new(ch[i], ch[n + i])).collect();
    ComplexVolume::new(dims, data)
}

fn add_volume_channels(ch: &mut [f64], x: &ComplexVolume) {
    let n = x.len();
    for (i, v) in x.data().iter().enumerate() {
        ch[i] += v.re;
        ch[n + i] += v.im;
    }
}

fn sub_volume_channels(ch: &mut [f64], x: &ComplexVolume) {
    let n = x.len();
    for (i, v) in x.data().iter().enumerate() {
        ch[i] -= v.re;
        ch[n + i] -= v.im;
    }
}

/// G(x): spec-level convenience wrapper for [`Network::forward`].
pub fn net_forward(net: &Network, x: &ComplexVolume) -> Result<ComplexVolume> {
    net.forward(x)
}

/// J^T v: convenience wrapper for [`Network::vjp`].
pub fn net_vjp(net: &Network, x: &ComplexVolume, v: &ComplexVolume) -> Result<ComplexVolume> {
    net.vjp(x, v)
}

// ---------------------------------------------------------------------------
// DWN1 weight format

const MAGIC: &[u8; 4] = b"DWN1";
const VERSION: u32 = 1;
const MAX_LAYERS: u32 = 256;
const MAX_CHANNELS: u32 = 1024;
const MAX_KERNEL: u32 = 31;

pub fn write_weights(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[net.global_residual as u8])?;
    w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        let (code, slope) = match layer.activation {
            Activation::None => (0u8, 0.0f32),
            Activation::Relu => (1, 0.0),
            Activation::LeakyRelu(s) => (2, s as f32),
        };
        w.write_all(&[code])?;
        w.write_all(&slope.to_le_bytes())?;
        let (kd, kh, kw) = layer.kernel;
        for v in [layer.out_ch, layer.in_ch, kd, kh, kw] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for wt in &layer.weights {
            w.write_all(&(*wt as f32).to_le_bytes())?;
        }
        for b in &layer.bias {
            w.write_all(&(*b as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad weight magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight version {version}")));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    let global_residual = match byte[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad residual flag {other}"))),
    };
    let layer_count = read_u32(&mut r)?;
    if layer_count == 0 || layer_count > MAX_LAYERS {
        return Err(Error::Format(format!("implausible layer count {layer_count}")));
    }
    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        r.read_exact(&mut byte)?;
        let slope = read_f32(&mut r)?;
        let activation = match byte[0] {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu(slope as f64),
            other => return Err(Error::Format(format!("bad activation code {other}"))),
        };
        let out_ch = read_u32(&mut r)?;
        let in_ch = read_u32(&mut r)?;
        let kd = read_u32(&mut r)?;
        let kh = read_u32(&mut r)?;
        let kw = read_u32(&mut r)?;
        if out_ch > MAX_CHANNELS || in_ch > MAX_CHANNELS {
            return Err(Error::Format(format!(
                "implausible channel counts {out_ch}x{in_ch}"
            )));
        }
        if kd > MAX_KERNEL || kh > MAX_KERNEL || kw > MAX_KERNEL {
            return Err(Error::Format(format!(
                "implausible kernel {kd}x{kh}x{kw}"
            )));
        }
        let count = out_ch as usize * in_ch as usize * (kd * kh * kw) as usize;
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push(read_f32(&mut r)? as f64);
        }
        let mut bias = Vec::with_capacity(out_ch as usize);
        for _ in 0..out_ch {
            bias.push(read_f32(&mut r)? as f64);
        }
        layers.push(ConvLayer::new(
            out_ch as usize,
            in_ch as usize,
            (kd as usize, kh as usize, kw as usize),
            weights,
            bias,
            activation,
        )?);
    }
    Network::new(layers, global_residual)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

// ---------------------------------------------------------------------------
// Hand-constructed nets standing in for trained weights

pub mod fixtures {
    use super::*;
    use crate::rng::SplitMix64;

    /// Residual net with an all-zero branch: G(x) = x exactly.
    pub fn zero_residual() -> Network {
        let layer = ConvLayer::new(2, 2, (1, 1, 1), vec![0.0; 4], vec![0.0; 2], Activation::None)
            .expect("fixture layer");
        Network::new(vec![layer], true).expect("fixture net")
    }

    /// Non-residual 1x1x1 identity: G(x) = x through the weights alone.
    pub fn identity() -> Network {
        let mut weights = vec![0.0; 4]; // (out, in, 1, 1, 1)
        weights[0] = 1.0; // out 0 <- in 0
        weights[3] = 1.0; // out 1 <- in 1
        let layer = ConvLayer::new(2, 2, (1, 1, 1), weights, vec![0.0; 2], Activation::None)
            .expect("fixture layer");
        Network::new(vec![layer], false).expect("fixture net")
    }

    /// Non-residual net with centered delta kernels: G(x) = x via k^3 taps.
    pub fn centered_delta(k: usize) -> Network {
        let taps = k * k * k;
        let mut weights = vec![0.0; 4 * taps];
        let center = (k / 2 * k + k / 2) * k + k / 2;
        weights[center] = 1.0; // out 0 <- in 0
        weights[3 * taps + center] = 1.0; // out 1 <- in 1
        let layer = ConvLayer::new(2, 2, (k, k, k), weights, vec![0.0; 2], Activation::None)
            .expect("fixture layer");
        Network::new(vec![layer], false).expect("fixture net")
    }

    /// Non-residual per-channel Gaussian blur: a stand-in for a competent
    /// denoiser, since G(x) - x is then a high-pass artifact estimate.
    pub fn gaussian_blur(k: usize, sigma: f64) -> Network {
        assert!(k % 2 == 1, "kernel size must be odd");
        let c = (k / 2) as f64;
        let taps = k * k * k;
        let mut kernel = Vec::with_capacity(taps);
        let mut sum = 0.0;
        for dz in 0..k {
            for dy in 0..k {
                for dx in 0..k {
                    let r2 = (dz as f64 - c).powi(2)
                        + (dy as f64 - c).powi(2)
                        + (dx as f64 - c).powi(2);
                    let v = (-r2 / (2.0 * sigma * sigma)).exp();
                    sum += v;
                    kernel.push(v);
                }
            }
        }
        for v in kernel.iter_mut() {
            *v /= sum;
        }
        let mut weights = vec![0.0; 4 * taps];
        weights[..taps].copy_from_slice(&kernel); // out 0 <- in 0
        weights[3 * taps..].copy_from_slice(&kernel); // out 1 <- in 1
        let layer = ConvLayer::new(2, 2, (k, k, k), weights, vec![0.0; 2], Activation::None)
            .expect("fixture layer");
        Network::new(vec![layer], false).expect("fixture net")
    }

    /// Random chain 2 -> hidden... -> 2 with leaky activations on all but
    /// the last layer. Weight scale keeps activations O(1).
    pub fn random_net(
        seed: u64,
        hidden: &[usize],
        kernel: usize,
        slope: f64,
        global_residual: bool,
    ) -> Network {
        let mut rng = SplitMix64::new(seed);
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let taps = kernel * kernel * kernel;
        let mut layers = Vec::new();
        for w in widths.windows(2) {
            let (in_ch, out_ch) = (w[0], w[1]);
            let scale = 1.0 / ((in_ch * taps) as f64).sqrt();
            let mut weights = Vec::with_capacity(out_ch * in_ch * taps);
            for _ in 0..out_ch * in_ch * taps {
                weights.push(rng.normal_pair().0 * scale);
            }
            let mut bias = Vec::with_capacity(out_ch);
            for _ in 0..out_ch {
                bias.push(0.1 * rng.normal_pair().0);
            }
            let last = layers.len() + 1 == widths.len() - 1;
            let activation = if last {
                Activation::None
            } else {
                Activation::LeakyRelu(slope)
            };
            layers.push(
                ConvLayer::new(
                    out_ch,
                    in_ch,
                    (kernel, kernel, kernel),
                    weights,
                    bias,
                    activation,
                )
                .expect("fixture layer"),
            );
        }
        Network::new(layers, global_residual).expect("fixture net")
    }
}
