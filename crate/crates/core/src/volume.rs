//! Complex 3D volume containers and the elementwise/reduction primitives
//! every other module consumes.
//!
//! Memory layout is fixed: C-order with x fastest and z slowest, so the
//! linear index of voxel (x, y, z) is `x + nx*(y + ny*z)`. Multi-coil data
//! prepends the coil axis as the slowest dimension. All internal arithmetic
//! is double precision; single precision appears only at file boundaries.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Grid dimensions (nx, ny, nz).
pub type Dims = (usize, usize, usize);

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims.0 * dims.1 * dims.2
}

/// Shared behaviour of the complex sample containers (volumes, k-space,
/// transform coefficients): a flat slice of samples plus a shape key used
/// for compatibility checks.
pub trait VoxelData: Sized {
    fn samples(&self) -> &[Complex64];
    fn samples_mut(&mut self) -> &mut [Complex64];
    /// (channels, nx, ny, nz); two containers are compatible iff keys match.
    fn shape_key(&self) -> [usize; 4];
    /// New container of identical shape holding `data`.
    fn with_samples(&self, data: Vec<Complex64>) -> Self;
}

fn check_same_shape<T: VoxelData>(a: &T, b: &T) -> Result<()> {
    if a.shape_key() != b.shape_key() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape_key(),
            b.shape_key()
        )));
    }
    Ok(())
}

/// A 3D complex-valued image or artifact map.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    dims: Dims,
    data: Vec<Complex64>,
}

impl ComplexVolume {
    /// Builds a volume from raw data in the fixed layout. Rejects length
    /// mismatches and non-finite entries.
    pub fn new(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(Error::InvalidArgument(format!("empty dims {dims:?}")));
        }
        if data.len() != voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                dims.0,
                dims.1,
                dims.2
            )));
        }
        let vol = Self { dims, data };
        vol.check_finite("ComplexVolume::new")?;
        Ok(vol)
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); voxel_count(dims)],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> Complex64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: Complex64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_finite(&self, ctx: &str) -> Result<()> {
        check_finite_slice(&self.data, ctx)
    }

    /// self += alpha * other, in place. Hot-loop helper for the solvers.
    pub fn axpy_in_place(&mut self, alpha: Complex64, other: &Self) -> Result<()> {
        check_same_shape(self, other)?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, alpha: Complex64) {
        for v in self.data.iter_mut() {
            *v *= alpha;
        }
    }
}

impl VoxelData for ComplexVolume {
    fn samples(&self) -> &[Complex64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    fn shape_key(&self) -> [usize; 4] {
        [1, self.dims.0, self.dims.1, self.dims.2]
    }
    fn with_samples(&self, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self {
            dims: self.dims,
            data,
        }
    }
}

/// Per-coil complex k-space samples on the Cartesian grid,
/// layout (coil, z, y, x) with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    ncoils: usize,
    dims: Dims,
    data: Vec<Complex64>,
}

impl KSpaceData {
    pub fn new(ncoils: usize, dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if ncoils == 0 {
            return Err(Error::InvalidArgument("ncoils must be >= 1".into()));
        }
        if data.len() != ncoils * voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {}x{}x{}x{}",
                data.len(),
                ncoils,
                dims.0,
                dims.1,
                dims.2
            )));
        }
        check_finite_slice(&data, "KSpaceData::new")?;
        Ok(Self { ncoils, dims, data })
    }

    pub fn zeros(ncoils: usize, dims: Dims) -> Self {
        Self {
            ncoils,
            dims,
            data: vec![Complex64::new(0.0, 0.0); ncoils * voxel_count(dims)],
        }
    }

    pub fn ncoils(&self) -> usize {
        self.ncoils
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Samples of one coil as a contiguous slice in volume layout.
    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = voxel_count(self.dims);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn coil_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = voxel_count(self.dims);
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

impl VoxelData for KSpaceData {
    fn samples(&self) -> &[Complex64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    fn shape_key(&self) -> [usize; 4] {
        [self.ncoils, self.dims.0, self.dims.1, self.dims.2]
    }
    fn with_samples(&self, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self {
            ncoils: self.ncoils,
            dims: self.dims,
            data,
        }
    }
}

pub(crate) fn check_finite_slice(data: &[Complex64], ctx: &str) -> Result<()> {
    if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite(ctx.to_string()));
    }
    Ok(())
}

/// Complex dot product sum(conj(a_i) * b_i).
pub fn vdot<T: VoxelData>(a: &T, b: &T) -> Result<Complex64> {
    check_same_shape(a, b)?;
    Ok(a.samples()
        .iter()
        .zip(b.samples().iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Euclidean norm sqrt(Re <a, a>).
pub fn norm2<T: VoxelData>(a: &T) -> f64 {
    a.samples().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Channelwise l1 norm: sum(|Re a_i| + |Im a_i|). This matches the
/// two-channel real/imaginary representation used by the networks; magnitude
/// shrinkage lives in the proximal operators instead.
pub fn norm1<T: VoxelData>(a: &T) -> f64 {
    a.samples().iter().map(|v| v.re.abs() + v.im.abs()).sum()
}

/// alpha * x + y, elementwise.
pub fn axpy<T: VoxelData>(alpha: Complex64, x: &T, y: &T) -> Result<T> {
    check_same_shape(x, y)?;
    let data = x
        .samples()
        .iter()
        .zip(y.samples().iter())
        .map(|(a, b)| alpha * a + b)
        .collect();
    Ok(x.with_samples(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_volume;

    #[test]
    fn vdot_all_ones_counts_voxels() {
        let dims = (4, 3, 2);
        let x = ComplexVolume::from_fn(dims, |_, _, _| Complex64::new(1.0, 0.0));
        let d = vdot(&x, &x).unwrap();
        assert_eq!(d, Complex64::new(24.0, 0.0));
    }

    #[test]
    fn vdot_with_zero_is_zero() {
        let dims = (4, 3, 2);
        let x = random_volume(dims, 1);
        let z = ComplexVolume::zeros(dims);
        assert_eq!(vdot(&x, &z).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn vdot_conjugate_symmetry() {
        let dims = (5, 4, 3);
        let a = random_volume(dims, 2);
        let b = random_volume(dims, 3);
        let ab = vdot(&a, &b).unwrap();
        let ba = vdot(&b, &a).unwrap();
        let err = (ab - ba.conj()).norm() / ab.norm();
        assert!(err < 1e-12, "relative error {err}");
    }

    #[test]
    fn vdot_linear_in_second_argument() {
        let dims = (4, 4, 4);
        let a = random_volume(dims, 4);
        let b = random_volume(dims, 5);
        let c = random_volume(dims, 6);
        let alpha = Complex64::new(0.7, -1.3);
        let combo = axpy(alpha, &b, &c).unwrap();
        let lhs = vdot(&a, &combo).unwrap();
        let rhs = alpha * vdot(&a, &b).unwrap() + vdot(&a, &c).unwrap();
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-12);
    }

    #[test]
    fn vdot_shape_mismatch_errors() {
        let a = ComplexVolume::zeros((2, 2, 2));
        let b = ComplexVolume::zeros((2, 2, 3));
        assert!(vdot(&a, &b).is_err());
    }

    #[test]
    fn norm2_matches_vdot() {
        let x = random_volume((6, 5, 4), 7);
        let n = norm2(&x);
        let d = vdot(&x, &x).unwrap().re.sqrt();
        assert!((n - d).abs() / n < 1e-12);
        assert_eq!(norm2(&ComplexVolume::zeros((3, 3, 3))), 0.0);
        let ones = ComplexVolume::from_fn((3, 3, 3), |_, _, _| Complex64::new(1.0, 0.0));
        assert!((norm2(&ones) - 27f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn norm2_absolute_homogeneity() {
        let x = random_volume((4, 4, 4), 8);
        let c = Complex64::new(-2.5, 1.25);
        let scaled = axpy(c, &x, &ComplexVolume::zeros(x.dims())).unwrap();
        assert!((norm2(&scaled) - c.norm() * norm2(&x)).abs() / norm2(&scaled) < 1e-12);
    }

    #[test]
    fn norm1_channelwise_definition() {
        let mut x = ComplexVolume::zeros((2, 2, 2));
        x.set(1, 0, 1, Complex64::new(3.0, -4.0));
        assert_eq!(norm1(&x), 7.0);
        assert_eq!(norm1(&ComplexVolume::zeros((2, 2, 2))), 0.0);
    }

    #[test]
    fn norm1_dominates_norm2() {
        for seed in 0..20 {
            let x = random_volume((4, 3, 2), 100 + seed);
            assert!(norm1(&x) >= norm2(&x));
        }
    }

    #[test]
    fn axpy_identities() {
        let dims = (3, 3, 3);
        let x = random_volume(dims, 9);
        let y = random_volume(dims, 10);
        let zero = ComplexVolume::zeros(dims);
        assert_eq!(axpy(Complex64::new(0.0, 0.0), &x, &y).unwrap(), y);
        assert_eq!(axpy(Complex64::new(1.0, 0.0), &x, &zero).unwrap(), x);
        let diff = axpy(Complex64::new(-1.0, 0.0), &x, &x).unwrap();
        assert_eq!(norm2(&diff), 0.0);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(ComplexVolume::new((2, 2, 2), vec![Complex64::new(0.0, 0.0); 7]).is_err());
        let mut data = vec![Complex64::new(0.0, 0.0); 8];
        data[3] = Complex64::new(f64::NAN, 0.0);
        assert!(ComplexVolume::new((2, 2, 2), data).is_err());
    }

    #[test]
    fn kspace_coil_slices() {
        let mut k = KSpaceData::zeros(2, (2, 2, 2));
        k.coil_mut(1)[0] = Complex64::new(5.0, 0.0);
        assert_eq!(k.coil(0)[0], Complex64::new(0.0, 0.0));
        assert_eq!(k.coil(1)[0], Complex64::new(5.0, 0.0));
        assert_eq!(k.data()[8], Complex64::new(5.0, 0.0));
    }
}
