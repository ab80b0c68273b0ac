//! The imaging operator A = DFS and friends: coil weighting S, centered
//! orthonormal 3D Fourier transform F, and k-space undersampling D, plus the
//! adjoint A^H and the normal operator A^H A + mu I used by the solvers.
//!
//! Conventions, fixed so that files and tests are reproducible bit for bit:
//! - the FFT is unitary (1/sqrt(N) scaling on both directions),
//! - DC sits at the grid center, index floor(n/2) per axis,
//! - the readout axis x is always fully sampled; the mask lives on (ky, kz)
//!   and is broadcast along x,
//! - off-mask k-space entries are exactly zero, not merely small.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{voxel_count, ComplexVolume, Dims, KSpaceData};

/// Cached FFT plans for one grid size. Immutable and thread-safe.
pub struct CenteredFft {
    dims: Dims,
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl CenteredFft {
    pub fn new(dims: Dims) -> Self {
        let mut planner = FftPlanner::new();
        let plan = |p: &mut FftPlanner<f64>, n: usize, dir: FftDirection| p.plan_fft(n, dir);
        Self {
            dims,
            fwd: [
                plan(&mut planner, dims.0, FftDirection::Forward),
                plan(&mut planner, dims.1, FftDirection::Forward),
                plan(&mut planner, dims.2, FftDirection::Forward),
            ],
            inv: [
                plan(&mut planner, dims.0, FftDirection::Inverse),
                plan(&mut planner, dims.1, FftDirection::Inverse),
                plan(&mut planner, dims.2, FftDirection::Inverse),
            ],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Unitary forward transform with DC at the grid center.
    pub fn forward(&self, x: &ComplexVolume) -> ComplexVolume {
        self.centered(x, &self.fwd)
    }

    /// Unitary inverse transform; exact inverse of [`CenteredFft::forward`].
    pub fn inverse(&self, x: &ComplexVolume) -> ComplexVolume {
        self.centered(x, &self.inv)
    }

    fn centered(&self, x: &ComplexVolume, plans: &[Arc<dyn Fft<f64>>; 3]) -> ComplexVolume {
        assert_eq!(x.dims(), self.dims, "CenteredFft built for other dims");
        let mut data = roll3(x.data(), self.dims, ishift_of(self.dims));
        fft3_in_place(&mut data, self.dims, plans);
        let mut out = roll3(&data, self.dims, shift_of(self.dims));
        let scale = 1.0 / (voxel_count(self.dims) as f64).sqrt();
        for v in out.iter_mut() {
            *v *= scale;
        }
        ComplexVolume::new(self.dims, out).expect("fft output shape")
    }
}

fn shift_of(dims: Dims) -> (usize, usize, usize) {
    (dims.0 / 2, dims.1 / 2, dims.2 / 2)
}

fn ishift_of(dims: Dims) -> (usize, usize, usize) {
    (
        dims.0 - dims.0 / 2,
        dims.1 - dims.1 / 2,
        dims.2 - dims.2 / 2,
    )
}

/// Circular shift by (sx, sy, sz): out[(i + s) mod n] = in[i] per axis.
fn roll3(data: &[Complex64], dims: Dims, s: (usize, usize, usize)) -> Vec<Complex64> {
    let (nx, ny, nz) = dims;
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for z in 0..nz {
        let zi = (z + s.2) % nz;
        for y in 0..ny {
            let yi = (y + s.1) % ny;
            let src_row = nx * (y + ny * z);
            let dst_row = nx * (yi + ny * zi);
            for x in 0..nx {
                out[dst_row + (x + s.0) % nx] = data[src_row + x];
            }
        }
    }
    out
}

fn fft3_in_place(data: &mut [Complex64], dims: Dims, plans: &[Arc<dyn Fft<f64>>; 3]) {
    let (nx, ny, nz) = dims;

    let mut scratch =
        vec![Complex64::new(0.0, 0.0); plans.iter().map(|p| p.get_inplace_scratch_len()).max().unwrap()];

    // x: contiguous rows
    for row in data.chunks_exact_mut(nx) {
        plans[0].process_with_scratch(row, &mut scratch);
    }

    // y: gather strided columns
    let mut buf = vec![Complex64::new(0.0, 0.0); ny.max(nz)];
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                buf[y] = data[x + nx * (y + ny * z)];
            }
            plans[1].process_with_scratch(&mut buf[..ny], &mut scratch);
            for y in 0..ny {
                data[x + nx * (y + ny * z)] = buf[y];
            }
        }
    }

    // z
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                buf[z] = data[x + nx * (y + ny * z)];
            }
            plans[2].process_with_scratch(&mut buf[..nz], &mut scratch);
            for z in 0..nz {
                data[x + nx * (y + ny * z)] = buf[z];
            }
        }
    }
}

/// One-shot centered unitary FFT (plans are rebuilt; prefer [`CenteredFft`]
/// inside loops).
pub fn fft_centered(x: &ComplexVolume) -> ComplexVolume {
    CenteredFft::new(x.dims()).forward(x)
}

/// One-shot centered unitary inverse FFT.
pub fn ifft_centered(k: &ComplexVolume) -> ComplexVolume {
    CenteredFft::new(k.dims()).inverse(k)
}

/// Per-coil complex sensitivity volumes, layout (coil, z, y, x).
///
/// Sum-of-squares over coils must not exceed 1 anywhere (equality holds
/// inside the imaged object); this keeps the normal operator well behaved.
#[derive(Debug, Clone)]
pub struct CoilMaps {
    ncoils: usize,
    dims: Dims,
    data: Vec<Complex64>,
}

impl CoilMaps {
    pub fn new(ncoils: usize, dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if ncoils == 0 {
            return Err(Error::InvalidArgument("ncoils must be >= 1".into()));
        }
        let n = voxel_count(dims);
        if data.len() != ncoils * n {
            return Err(Error::ShapeMismatch(format!(
                "coil map data length {} != {}x{}",
                data.len(),
                ncoils,
                n
            )));
        }
        crate::volume::check_finite_slice(&data, "CoilMaps::new")?;
        // Allow a little slack for single-precision file round-trips.
        for v in 0..n {
            let sos: f64 = (0..ncoils).map(|c| data[c * n + v].norm_sqr()).sum();
            if sos > 1.0 + 1e-5 {
                return Err(Error::Validation(format!(
                    "coil sum-of-squares {sos} exceeds 1 at voxel {v}"
                )));
            }
        }
        Ok(Self { ncoils, dims, data })
    }

    pub fn ncoils(&self) -> usize {
        self.ncoils
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        let n = voxel_count(self.dims);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Boolean sampling pattern over the phase-encode plane (ky, kz), broadcast
/// along the fully sampled readout axis x. Entry (y, z) lives at index
/// `y + ny*z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    ny: usize,
    nz: usize,
    center: (usize, usize),
    data: Vec<bool>,
}

impl SamplingMask {
    /// `center` is the size (cy, cz) of the fully sampled centered block;
    /// the block must be entirely true in `data`.
    pub fn new(ny: usize, nz: usize, center: (usize, usize), data: Vec<bool>) -> Result<Self> {
        if ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument("empty mask dims".into()));
        }
        if data.len() != ny * nz {
            return Err(Error::ShapeMismatch(format!(
                "mask data length {} != {}x{}",
                data.len(),
                ny,
                nz
            )));
        }
        let (cy, cz) = center;
        if cy > ny || cz > nz {
            return Err(Error::InvalidArgument(format!(
                "center block {cy}x{cz} exceeds mask {ny}x{nz}"
            )));
        }
        if !data.iter().any(|&b| b) {
            return Err(Error::Validation("mask has no sampled entries".into()));
        }
        let mask = Self {
            ny,
            nz,
            center,
            data,
        };
        let (y0, z0) = mask.center_start();
        for z in z0..z0 + cz {
            for y in y0..y0 + cy {
                if !mask.is_sampled(y, z) {
                    return Err(Error::Validation(format!(
                        "center block entry ({y}, {z}) not sampled"
                    )));
                }
            }
        }
        Ok(mask)
    }

    pub fn full(ny: usize, nz: usize) -> Self {
        Self {
            ny,
            nz,
            center: (ny, nz),
            data: vec![true; ny * nz],
        }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Size (cy, cz) of the fully sampled center block.
    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    /// First (y, z) index of the center block.
    pub fn center_start(&self) -> (usize, usize) {
        ((self.ny - self.center.0) / 2, (self.nz - self.center.1) / 2)
    }

    #[inline]
    pub fn is_sampled(&self, y: usize, z: usize) -> bool {
        self.data[y + self.ny * z]
    }

    pub fn count_sampled(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }
}

/// The composed imaging operator for one acquisition geometry.
pub struct ForwardModel {
    maps: CoilMaps,
    mask: SamplingMask,
    fft: CenteredFft,
}

impl ForwardModel {
    pub fn new(maps: CoilMaps, mask: SamplingMask) -> Result<Self> {
        let (_, ny, nz) = maps.dims();
        if mask.ny() != ny || mask.nz() != nz {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} does not match maps (ny, nz) = {}x{}",
                mask.ny(),
                mask.nz(),
                ny,
                nz
            )));
        }
        let fft = CenteredFft::new(maps.dims());
        Ok(Self { maps, mask, fft })
    }

    pub fn dims(&self) -> Dims {
        self.maps.dims()
    }

    pub fn ncoils(&self) -> usize {
        self.maps.ncoils()
    }

    pub fn maps(&self) -> &CoilMaps {
        &self.maps
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    fn check_volume(&self, x: &ComplexVolume) -> Result<()> {
        if x.dims() != self.dims() {
            return Err(Error::ShapeMismatch(format!(
                "volume dims {:?} != model dims {:?}",
                x.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    fn check_kspace(&self, y: &KSpaceData) -> Result<()> {
        if y.dims() != self.dims() || y.ncoils() != self.ncoils() {
            return Err(Error::ShapeMismatch(format!(
                "k-space ({} coils, {:?}) != model ({} coils, {:?})",
                y.ncoils(),
                y.dims(),
                self.ncoils(),
                self.dims()
            )));
        }
        Ok(())
    }

    /// y_c = D  F (S_c x) per coil. Off-mask entries are exactly zero.
    pub fn apply_forward(&self, x: &ComplexVolume) -> Result<KSpaceData> {
        self.check_volume(x)?;
        let dims = self.dims();
        let n = voxel_count(dims);
        let coils: Vec<Vec<Complex64>> = (0..self.ncoils())
            .into_par_iter()
            .map(|c| {
                let map = self.maps.coil(c);
                let weighted = ComplexVolume::from_fn(dims, |xx, yy, zz| {
                    let i = xx + dims.0 * (yy + dims.1 * zz);
                    map[i] * x.data()[i]
                });
                let mut k = self.fft.forward(&weighted).into_data();
                zero_off_mask(&mut k, dims, &self.mask);
                k
            })
            .collect();
        let mut data = Vec::with_capacity(self.ncoils() * n);
        for c in coils {
            data.extend_from_slice(&c);
        }
        KSpaceData::new(self.ncoils(), dims, data)
    }

    /// x = sum_c conj(S_c)  F^H (D y_c). Applies the mask to its input, so
    /// it is a true adjoint even for unmasked data.
    pub fn apply_adjoint(&self, y: &KSpaceData) -> Result<ComplexVolume> {
        self.check_kspace(y)?;
        let dims = self.dims();
        let partials: Vec<ComplexVolume> = (0..self.ncoils())
            .into_par_iter()
            .map(|c| {
                let mut k = y.coil(c).to_vec();
                zero_off_mask(&mut k, dims, &self.mask);
                let kvol = ComplexVolume::new(dims, k).expect("coil slice shape");
                let img = self.fft.inverse(&kvol);
                let map = self.maps.coil(c);
                let mut out = img.into_data();
                for (v, s) in out.iter_mut().zip(map.iter()) {
                    *v *= s.conj();
                }
                ComplexVolume::new(dims, out).expect("adjoint partial shape")
            })
            .collect();
        // Fixed-order reduction keeps the result independent of thread count.
        let mut acc = ComplexVolume::zeros(dims);
        for p in &partials {
            acc.axpy_in_place(Complex64::new(1.0, 0.0), p)?;
        }
        Ok(acc)
    }

    /// A^H (A x) + mu x. Hermitian, and positive definite for mu > 0.
    pub fn apply_normal(&self, mu: f64, x: &ComplexVolume) -> Result<ComplexVolume> {
        if mu < 0.0 {
            return Err(Error::InvalidArgument(format!("negative mu {mu}")));
        }
        let mut out = self.apply_adjoint(&self.apply_forward(x)?)?;
        if mu != 0.0 {
            out.axpy_in_place(Complex64::new(mu, 0.0), x)?;
        }
        Ok(out)
    }
}

fn zero_off_mask(k: &mut [Complex64], dims: Dims, mask: &SamplingMask) {
    let (nx, ny, nz) = dims;
    for z in 0..nz {
        for y in 0..ny {
            if !mask.is_sampled(y, z) {
                let row = nx * (y + ny * z);
                for v in k[row..row + nx].iter_mut() {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}
