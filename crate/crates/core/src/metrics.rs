//! Quantitative evaluation: NMSE, PSNR, and volumetric SSIM.
//!
//! NMSE and PSNR are computed on the complex difference; SSIM compares
//! magnitude images with a 7x7x7 uniform window, K1 = 0.01, K2 = 0.03 and
//! the dynamic range taken from the reference volume (so the metric is
//! intentionally asymmetric in its arguments).

use crate::error::{Error, Result};
use crate::volume::{norm2, ComplexVolume};

/// PSNR values are capped here when the MSE underflows.
pub const PSNR_CAP_DB: f64 = 120.0;
/// Side length of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shapes(recon: &ComplexVolume, gt: &ComplexVolume) -> Result<()> {
    if recon.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "recon {:?} vs reference {:?}",
            recon.dims(),
            gt.dims()
        )));
    }
    Ok(())
}

/// ||recon - gt||^2 / ||gt||^2 on complex volumes.
pub fn nmse(recon: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    check_shapes(recon, gt)?;
    let denom = norm2(gt);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "NMSE undefined for an all-zero reference".into(),
        ));
    }
    let num: f64 = recon
        .data()
        .iter()
        .zip(gt.data().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / (denom * denom))
}

/// 10 log10(peak^2 / MSE) with peak = max|gt|, capped at
/// [`PSNR_CAP_DB`] when the MSE underflows to zero.
pub fn psnr(recon: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    check_shapes(recon, gt)?;
    let peak = gt.max_abs();
    let mse: f64 = recon
        .data()
        .iter()
        .zip(gt.data().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / gt.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean local SSIM over all fully interior 7x7x7 window placements of the
/// magnitude images. Requires every dimension to be at least the window
/// size and a nonzero reference.
pub fn ssim3d(recon: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    check_shapes(recon, gt)?;
    let (nx, ny, nz) = gt.dims();
    let w = SSIM_WINDOW;
    if nx < w || ny < w || nz < w {
        return Err(Error::InvalidArgument(format!(
            "dims {:?} smaller than the {w}^3 SSIM window",
            gt.dims()
        )));
    }
    let peak = gt.max_abs();
    if peak == 0.0 {
        return Err(Error::InvalidArgument(
            "SSIM undefined for an all-zero reference".into(),
        ));
    }
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);

    let n = nx * ny * nz;
    let mut a = vec![0.0f64; n];
    let mut b = vec![0.0f64; n];
    for i in 0..n {
        a[i] = recon.data()[i].norm();
        b[i] = gt.data()[i].norm();
    }

    let ia = Integral3::build(&a, (nx, ny, nz));
    let ib = Integral3::build(&b, (nx, ny, nz));
    let iaa = Integral3::build_sq(&a, (nx, ny, nz));
    let ibb = Integral3::build_sq(&b, (nx, ny, nz));
    let iab = Integral3::build_prod(&a, &b, (nx, ny, nz));

    let count = (w * w * w) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for z0 in 0..=nz - w {
        for y0 in 0..=ny - w {
            for x0 in 0..=nx - w {
                let sa = ia.block(x0, y0, z0, w);
                let sb = ib.block(x0, y0, z0, w);
                let saa = iaa.block(x0, y0, z0, w);
                let sbb = ibb.block(x0, y0, z0, w);
                let sab = iab.block(x0, y0, z0, w);
                let mu_a = sa / count;
                let mu_b = sb / count;
                let var_a = saa / count - mu_a * mu_a;
                let var_b = sbb / count - mu_b * mu_b;
                let cov = sab / count - mu_a * mu_b;
                let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

/// Prefix sums over 3D blocks [0..x) x [0..y) x [0..z).
struct Integral3 {
    nx: usize,
    ny: usize,
    table: Vec<f64>,
}

impl Integral3 {
    fn build(values: &[f64], dims: (usize, usize, usize)) -> Self {
        Self::build_with(dims, |i| values[i])
    }

    fn build_sq(values: &[f64], dims: (usize, usize, usize)) -> Self {
        Self::build_with(dims, |i| values[i] * values[i])
    }

    fn build_prod(a: &[f64], b: &[f64], dims: (usize, usize, usize)) -> Self {
        Self::build_with(dims, |i| a[i] * b[i])
    }

    fn build_with(dims: (usize, usize, usize), f: impl Fn(usize) -> f64) -> Self {
        let (nx, ny, nz) = dims;
        let (px, py) = (nx + 1, ny + 1);
        let mut table = vec![0.0f64; px * py * (nz + 1)];
        let idx = |x: usize, y: usize, z: usize| x + px * (y + py * z);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = f(x + nx * (y + ny * z));
                    table[idx(x + 1, y + 1, z + 1)] = v
                        + table[idx(x, y + 1, z + 1)]
                        + table[idx(x + 1, y, z + 1)]
                        + table[idx(x + 1, y + 1, z)]
                        - table[idx(x, y, z + 1)]
                        - table[idx(x, y + 1, z)]
                        - table[idx(x + 1, y, z)]
                        + table[idx(x, y, z)];
                }
            }
        }
        Self { nx, ny, table }
    }

    #[inline]
    fn block(&self, x0: usize, y0: usize, z0: usize, w: usize) -> f64 {
        let (px, py) = (self.nx + 1, self.ny + 1);
        let idx = |x: usize, y: usize, z: usize| x + px * (y + py * z);
        let (x1, y1, z1) = (x0 + w, y0 + w, z0 + w);
        self.table[idx(x1, y1, z1)]
            - self.table[idx(x0, y1, z1)]
            - self.table[idx(x1, y0, z1)]
            - self.table[idx(x1, y1, z0)]
            + self.table[idx(x0, y0, z1)]
            + self.table[idx(x0, y1, z0)]
            + self.table[idx(x1, y0, z0)]
            - self.table[idx(x0, y0, z0)]
    }
}
