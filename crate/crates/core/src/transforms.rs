//! Sparsifying transforms and proximal machinery.
//!
//! Classical linear transforms (forward differences, orthonormal Haar
//! wavelets) sit next to the learned residual transform G(x) - x built from
//! a de-aliasing network. All of them expose the same two capabilities:
//! `forward` producing coefficients and `pullback` applying the transposed
//! Jacobian, which is the fixed adjoint for the linear ones.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::net::Network;
use crate::volume::{voxel_count, ComplexVolume, Dims, VoxelData};

/// Multi-channel complex coefficient container, layout (channel, z, y, x)
/// with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    channels: usize,
    dims: Dims,
    data: Vec<Complex64>,
}

impl Coefficients {
    pub fn new(channels: usize, dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("channels must be >= 1".into()));
        }
        if data.len() != channels * voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "coefficient data length {} != {} channels x {:?}",
                data.len(),
                channels,
                dims
            )));
        }
        crate::volume::check_finite_slice(&data, "Coefficients::new")?;
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    pub fn zeros(channels: usize, dims: Dims) -> Self {
        Self {
            channels,
            dims,
            data: vec![Complex64::new(0.0, 0.0); channels * voxel_count(dims)],
        }
    }

    pub fn from_volume(vol: ComplexVolume) -> Self {
        Self {
            channels: 1,
            dims: vol.dims(),
            data: vol.into_data(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = voxel_count(self.dims);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = voxel_count(self.dims);
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Single-channel coefficients viewed as a plain volume.
    pub fn into_volume(self) -> Result<ComplexVolume> {
        if self.channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "cannot view {}-channel coefficients as a volume",
                self.channels
            )));
        }
        ComplexVolume::new(self.dims, self.data)
    }
}

impl VoxelData for Coefficients {
    fn samples(&self) -> &[Complex64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    fn shape_key(&self) -> [usize; 4] {
        [self.channels, self.dims.0, self.dims.1, self.dims.2]
    }
    fn with_samples(&self, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self {
            channels: self.channels,
            dims: self.dims,
            data,
        }
    }
}

/// A transform t(x) with a vector-Jacobian product. Linear transforms ignore
/// the linearization point in `pullback`.
pub trait SparsifyingTransform: Send + Sync {
    fn forward(&self, x: &ComplexVolume) -> Result<Coefficients>;
    /// (dt/dx)^T v evaluated at x.
    fn pullback(&self, x: &ComplexVolume, v: &Coefficients) -> Result<ComplexVolume>;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Forward differences along x, y, z with zero boundary at the last index of
/// each axis (channels 0, 1, 2 respectively).
pub fn finite_difference_forward(x: &ComplexVolume) -> Coefficients {
    let dims = x.dims();
    let (nx, ny, nz) = dims;
    let n = voxel_count(dims);
    let zero = Complex64::new(0.0, 0.0);
    let mut data = vec![zero; 3 * n];
    for z in 0..nz {
        for y in 0..ny {
            for xx in 0..nx {
                let i = xx + nx * (y + ny * z);
                let v = x.data()[i];
                if xx + 1 < nx {
                    data[i] = x.data()[i + 1] - v;
                }
                if y + 1 < ny {
                    data[n + i] = x.data()[i + nx] - v;
                }
                if z + 1 < nz {
                    data[2 * n + i] = x.data()[i + nx * ny] - v;
                }
            }
        }
    }
    Coefficients {
        channels: 3,
        dims,
        data,
    }
}

/// Adjoint of [`finite_difference_forward`]: negative divergence with the
/// matching boundary treatment.
pub fn finite_difference_adjoint(v: &Coefficients) -> Result<ComplexVolume> {
    if v.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "finite-difference adjoint expects 3 channels, got {}",
            v.channels()
        )));
    }
    let dims = v.dims();
    let (nx, ny, nz) = dims;
    let n = voxel_count(dims);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let d = v.data();
    for z in 0..nz {
        for y in 0..ny {
            for xx in 0..nx {
                let i = xx + nx * (y + ny * z);
                let mut acc = Complex64::new(0.0, 0.0);
                // x channel
                if xx > 0 {
                    acc += d[i - 1];
                }
                if xx + 1 < nx {
                    acc -= d[i];
                }
                // y channel
                if y > 0 {
                    acc += d[n + i - nx];
                }
                if y + 1 < ny {
                    acc -= d[n + i];
                }
                // z channel
                if z > 0 {
                    acc += d[2 * n + i - nx * ny];
                }
                if z + 1 < nz {
                    acc -= d[2 * n + i];
                }
                out[i] = acc;
            }
        }
    }
    ComplexVolume::new(dims, out)
}

/// Finite-difference transform as a [`SparsifyingTransform`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FiniteDifference;

impl SparsifyingTransform for FiniteDifference {
    fn forward(&self, x: &ComplexVolume) -> Result<Coefficients> {
        Ok(finite_difference_forward(x))
    }
    fn pullback(&self, _x: &ComplexVolume, v: &Coefficients) -> Result<ComplexVolume> {
        finite_difference_adjoint(v)
    }
}

// ---------------------------------------------------------------------------
// Orthonormal Haar wavelets

fn check_divisible(dims: Dims, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    let f = 1usize << levels;
    if dims.0 % f != 0 || dims.1 % f != 0 || dims.2 % f != 0 {
        return Err(Error::InvalidArgument(format!(
            "dims {dims:?} not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_step(buf: &mut [Complex64], tmp: &mut [Complex64], m: usize) {
    for k in 0..m / 2 {
        let a = buf[2 * k];
        let b = buf[2 * k + 1];
        tmp[k] = (a + b) * SQRT_HALF;
        tmp[m / 2 + k] = (a - b) * SQRT_HALF;
    }
    buf[..m].copy_from_slice(&tmp[..m]);
}

fn haar_step_inv(buf: &mut [Complex64], tmp: &mut [Complex64], m: usize) {
    for k in 0..m / 2 {
        let a = buf[k];
        let d = buf[m / 2 + k];
        tmp[2 * k] = (a + d) * SQRT_HALF;
        tmp[2 * k + 1] = (a - d) * SQRT_HALF;
    }
    buf[..m].copy_from_slice(&tmp[..m]);
}

fn haar_pass(
    data: &mut [Complex64],
    dims: Dims,
    sub: Dims,
    inverse: bool,
) {
    let (nx, ny, _) = dims;
    let (mx, my, mz) = sub;
    let mut line = vec![Complex64::new(0.0, 0.0); mx.max(my).max(mz)];
    let mut tmp = vec![Complex64::new(0.0, 0.0); mx.max(my).max(mz)];
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);

    let do_axis = |axis: usize, data: &mut [Complex64], line: &mut [Complex64], tmp: &mut [Complex64]| {
        let (m, outer1, outer2) = match axis {
            0 => (mx, my, mz),
            1 => (my, mx, mz),
            _ => (mz, mx, my),
        };
        if m < 2 {
            return;
        }
        for o2 in 0..outer2 {
            for o1 in 0..outer1 {
                for k in 0..m {
                    let (x, y, z) = match axis {
                        0 => (k, o1, o2),
                        1 => (o1, k, o2),
                        _ => (o1, o2, k),
                    };
                    line[k] = data[idx(x, y, z)];
                }
                if inverse {
                    haar_step_inv(line, tmp, m);
                } else {
                    haar_step(line, tmp, m);
                }
                for k in 0..m {
                    let (x, y, z) = match axis {
                        0 => (k, o1, o2),
                        1 => (o1, k, o2),
                        _ => (o1, o2, k),
                    };
                    data[idx(x, y, z)] = line[k];
                }
            }
        }
    };

    if inverse {
        do_axis(2, data, &mut line, &mut tmp);
        do_axis(1, data, &mut line, &mut tmp);
        do_axis(0, data, &mut line, &mut tmp);
    } else {
        do_axis(0, data, &mut line, &mut tmp);
        do_axis(1, data, &mut line, &mut tmp);
        do_axis(2, data, &mut line, &mut tmp);
    }
}

/// Orthonormal 3D Haar analysis, recursing on the low band, coefficients
/// packed in place in the standard octave layout.
pub fn haar_dwt_forward(x: &ComplexVolume, levels: usize) -> Result<ComplexVolume> {
    let dims = x.dims();
    check_divisible(dims, levels)?;
    let mut data = x.data().to_vec();
    for l in 0..levels {
        let sub = (dims.0 >> l, dims.1 >> l, dims.2 >> l);
        haar_pass(&mut data, dims, sub, false);
    }
    ComplexVolume::new(dims, data)
}

/// Exact inverse (= adjoint) of [`haar_dwt_forward`].
pub fn haar_dwt_inverse(coeffs: &ComplexVolume, levels: usize) -> Result<ComplexVolume> {
    let dims = coeffs.dims();
    check_divisible(dims, levels)?;
    let mut data = coeffs.data().to_vec();
    for l in (0..levels).rev() {
        let sub = (dims.0 >> l, dims.1 >> l, dims.2 >> l);
        haar_pass(&mut data, dims, sub, true);
    }
    ComplexVolume::new(dims, data)
}

#[derive(Debug, Clone, Copy)]
pub struct HaarDwt {
    pub levels: usize,
}

impl SparsifyingTransform for HaarDwt {
    fn forward(&self, x: &ComplexVolume) -> Result<Coefficients> {
        Ok(Coefficients::from_volume(haar_dwt_forward(x, self.levels)?))
    }
    fn pullback(&self, _x: &ComplexVolume, v: &Coefficients) -> Result<ComplexVolume> {
        haar_dwt_inverse(&v.clone().into_volume()?, self.levels)
    }
}

// ---------------------------------------------------------------------------
// Proximal and measurement helpers

/// Complex magnitude shrinkage v * max(0, 1 - tau/|v|); the exact proximal
/// map of tau * ||.||_1 (magnitude l1) + 0.5 ||. - v||^2.
pub fn soft_threshold<T: VoxelData>(v: &T, tau: f64) -> Result<T> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative threshold {tau}")));
    }
    let data = v
        .samples()
        .iter()
        .map(|&c| {
            let m = c.norm();
            if m <= tau {
                Complex64::new(0.0, 0.0)
            } else {
                c * (1.0 - tau / m)
            }
        })
        .collect();
    Ok(v.with_samples(data))
}

/// Elementwise channelwise sign: sign(Re) + i sign(Im), with sign(0) = 0.
/// This is the l1 subgradient matching [`crate::volume::norm1`].
pub fn channel_sign<T: VoxelData>(v: &T) -> T {
    let data = v
        .samples()
        .iter()
        .map(|c| Complex64::new(sign0(c.re), sign0(c.im)))
        .collect();
    v.with_samples(data)
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fraction of entries with |t| below `rel_threshold * max|t|`. An all-zero
/// map is maximally sparse by convention and returns 1.0.
pub fn sparsity_fraction<T: VoxelData>(t: &T, rel_threshold: f64) -> f64 {
    let max = t.samples().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 1.0;
    }
    let cut = rel_threshold * max;
    let below = t.samples().iter().filter(|v| v.norm() < cut).count();
    below as f64 / t.samples().len() as f64
}

// ---------------------------------------------------------------------------
// Learned residual transform

/// The artifact-estimation transform t(x) = G(x) - x for a de-aliasing
/// network G. When the network carries a global residual connection the
/// pre-residual branch output is the transform value itself.
pub struct LearnedResidual {
    net: Network,
}

impl LearnedResidual {
    pub fn new(net: Network) -> Self {
        Self { net }
    }

    pub fn net(&self) -> &Network {
        &self.net
    }
}

impl SparsifyingTransform for LearnedResidual {
    fn forward(&self, x: &ComplexVolume) -> Result<Coefficients> {
        Ok(Coefficients::from_volume(self.net.residual_forward(x)?))
    }
    fn pullback(&self, x: &ComplexVolume, v: &Coefficients) -> Result<ComplexVolume> {
        self.net.residual_vjp(x, &v.clone().into_volume()?)
    }
}

/// t(x) = G(x) - x.
pub fn learned_residual_forward(net: &Network, x: &ComplexVolume) -> Result<ComplexVolume> {
    net.residual_forward(x)
}

/// (J - I)^T v at x, where J is the Jacobian of G.
pub fn learned_residual_pullback(
    net: &Network,
    x: &ComplexVolume,
    v: &ComplexVolume,
) -> Result<ComplexVolume> {
    net.residual_vjp(x, v)
}

/// Verification transform t(z) = z - reference with identity pullback.
/// It plays the role of a perfectly informed artifact estimator in oracle
/// tests; it is not a reconstruction method.
pub struct OracleResidual {
    reference: ComplexVolume,
}

impl OracleResidual {
    pub fn new(reference: ComplexVolume) -> Self {
        Self { reference }
    }
}

impl SparsifyingTransform for OracleResidual {
    fn forward(&self, x: &ComplexVolume) -> Result<Coefficients> {
        let diff = crate::volume::axpy(Complex64::new(-1.0, 0.0), &self.reference, x)?;
        Ok(Coefficients::from_volume(diff))
    }
    fn pullback(&self, _x: &ComplexVolume, v: &Coefficients) -> Result<ComplexVolume> {
        v.clone().into_volume()
    }
}
