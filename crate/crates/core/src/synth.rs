//! Synthetic ground truth: phantoms, coil sensitivity maps, and noisy
//! undersampled k-space, all deterministic per seed.
//!
//! The phantom is a superposition of smooth ellipsoids plus a few thin
//! bright curved tubes (synthetic vessels), carries a smooth low-order phase,
//! and is normalized so its maximal magnitude is exactly 1. Coil maps are
//! broad Gaussian lobes anchored on the volume boundary with distinct linear
//! phases, normalized to unit sum-of-squares at every voxel.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{CoilMaps, ForwardModel};
use crate::rng::SplitMix64;
use crate::volume::{norm2, voxel_count, ComplexVolume, Dims, KSpaceData};

// Phantom geometry, frozen so fixtures stay stable.
const ELLIPSOIDS_MIN: u64 = 5;
const ELLIPSOIDS_SPAN: u64 = 6; // 5..=10
const TUBES_MIN: u64 = 2;
const TUBES_SPAN: u64 = 2; // 2..=3
const ELL_CENTER_LO: f64 = 0.28;
const ELL_CENTER_HI: f64 = 0.72;
const ELL_AXIS_LO: f64 = 0.10;
const ELL_AXIS_HI: f64 = 0.26;
const ELL_INTENSITY_LO: f64 = 0.30;
const ELL_INTENSITY_HI: f64 = 1.00;
const TUBE_RADIUS_LO: f64 = 1.0;
const TUBE_RADIUS_HI: f64 = 1.5;
const TUBE_INTENSITY_LO: f64 = 1.05;
const TUBE_INTENSITY_HI: f64 = 1.25;
const PHASE_COEFF_MAX: f64 = 0.6;

/// Synthetic acquisition description used by fixtures and the CLI.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dims: Dims,
    pub n_coils: usize,
    /// Noise fraction l: ||noise|| = l * ||clean k-space||.
    pub noise_level: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coils == 0 {
            return Err(Error::InvalidArgument("n_coils must be >= 1".into()));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level {} must be >= 0",
                self.noise_level
            )));
        }
        Ok(())
    }

    /// Derived sub-seeds so one scenario seed fans out to independent draws.
    pub fn phantom_seed(&self) -> u64 {
        self.seed
    }

    pub fn coil_seed(&self) -> u64 {
        self.seed ^ 0xC011_5EED_C011_5EED
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed ^ 0x0115_E00F_0115_E00F
    }
}

/// Ellipsoids, vessels, smooth phase; max magnitude exactly 1.
pub fn make_phantom(dims: Dims, seed: u64) -> ComplexVolume {
    let (nx, ny, nz) = dims;
    let n = voxel_count(dims);
    let mut rng = SplitMix64::new(seed);
    let mut mag = vec![0.0f64; n];

    let n_ell = ELLIPSOIDS_MIN + rng.below(ELLIPSOIDS_SPAN);
    for _ in 0..n_ell {
        let cx = rng.range_f64(ELL_CENTER_LO, ELL_CENTER_HI) * nx as f64;
        let cy = rng.range_f64(ELL_CENTER_LO, ELL_CENTER_HI) * ny as f64;
        let cz = rng.range_f64(ELL_CENTER_LO, ELL_CENTER_HI) * nz as f64;
        let ax = rng.range_f64(ELL_AXIS_LO, ELL_AXIS_HI) * nx as f64;
        let ay = rng.range_f64(ELL_AXIS_LO, ELL_AXIS_HI) * ny as f64;
        let az = rng.range_f64(ELL_AXIS_LO, ELL_AXIS_HI) * nz as f64;
        let w = rng.range_f64(ELL_INTENSITY_LO, ELL_INTENSITY_HI);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let rho2 = ((x as f64 - cx) / ax).powi(2)
                        + ((y as f64 - cy) / ay).powi(2)
                        + ((z as f64 - cz) / az).powi(2);
                    if rho2 < 1.0 {
                        mag[x + nx * (y + ny * z)] += w * (1.0 - rho2);
                    }
                }
            }
        }
    }

    // Thin bright tubes running along the readout axis with sinusoidal
    // in-plane wander; accumulated as a pointwise max so they stay crisp.
    let n_tubes = TUBES_MIN + rng.below(TUBES_SPAN);
    let mut tube = vec![0.0f64; n];
    for _ in 0..n_tubes {
        let y0 = rng.range_f64(0.3, 0.7) * ny as f64;
        let z0 = rng.range_f64(0.3, 0.7) * nz as f64;
        let amp_y = rng.range_f64(0.05, 0.15) * ny as f64;
        let amp_z = rng.range_f64(0.05, 0.15) * nz as f64;
        let freq_y = rng.range_f64(0.5, 1.5);
        let freq_z = rng.range_f64(0.5, 1.5);
        let phase_y = rng.range_f64(0.0, TAU);
        let phase_z = rng.range_f64(0.0, TAU);
        let radius = rng.range_f64(TUBE_RADIUS_LO, TUBE_RADIUS_HI);
        let w = rng.range_f64(TUBE_INTENSITY_LO, TUBE_INTENSITY_HI);
        let sigma = radius / 1.2;
        let steps = 4 * nx;
        let reach = (2.0 * radius).ceil() as isize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let px = t * (nx as f64 - 1.0);
            let py = y0 + amp_y * (TAU * freq_y * t + phase_y).sin();
            let pz = z0 + amp_z * (TAU * freq_z * t + phase_z).sin();
            let (ix, iy, iz) = (px.round() as isize, py.round() as isize, pz.round() as isize);
            for dz in -reach..=reach {
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        let (x, y, z) = (ix + dx, iy + dy, iz + dz);
                        if x < 0 || y < 0 || z < 0 {
                            continue;
                        }
                        let (x, y, z) = (x as usize, y as usize, z as usize);
                        if x >= nx || y >= ny || z >= nz {
                            continue;
                        }
                        let d2 = (x as f64 - px).powi(2)
                            + (y as f64 - py).powi(2)
                            + (z as f64 - pz).powi(2);
                        let v = w * (-d2 / (2.0 * sigma * sigma)).exp();
                        let cell = &mut tube[x + nx * (y + ny * z)];
                        if v > *cell {
                            *cell = v;
                        }
                    }
                }
            }
        }
    }
    for (m, t) in mag.iter_mut().zip(tube.iter()) {
        if *t > *m {
            *m = *t;
        }
    }

    // Smooth low-order phase in normalized coordinates.
    let mut coeff = [0.0f64; 7];
    for c in coeff.iter_mut() {
        *c = rng.range_f64(-PHASE_COEFF_MAX, PHASE_COEFF_MAX);
    }
    let phase_at = |x: usize, y: usize, z: usize| {
        let u = 2.0 * x as f64 / (nx.max(2) - 1) as f64 - 1.0;
        let v = 2.0 * y as f64 / (ny.max(2) - 1) as f64 - 1.0;
        let w = 2.0 * z as f64 / (nz.max(2) - 1) as f64 - 1.0;
        coeff[0] + coeff[1] * u + coeff[2] * v + coeff[3] * w
            + coeff[4] * u * v
            + coeff[5] * v * w
            + coeff[6] * u * w
    };

    // Normalize the magnitude so the peak is exactly 1 (x/x == 1.0), and
    // anchor the phase there so the peak voxel is exactly 1 + 0i.
    let mut amax = 0usize;
    for (i, m) in mag.iter().enumerate() {
        if *m > mag[amax] {
            amax = i;
        }
    }
    let peak = mag[amax];
    debug_assert!(peak > 0.0, "phantom magnitude collapsed to zero");
    let peak_phase = {
        let z = amax / (nx * ny);
        let y = (amax / nx) % ny;
        let x = amax % nx;
        phase_at(x, y, z)
    };

    let mut data = Vec::with_capacity(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let m = mag[i] / peak;
                let p = phase_at(x, y, z) - peak_phase;
                data.push(Complex64::new(m * p.cos(), m * p.sin()));
            }
        }
    }
    ComplexVolume::new(dims, data).expect("phantom construction")
}

/// Smooth boundary-anchored Gaussian lobes with distinct linear phases,
/// normalized so the sum of squared magnitudes is 1 at every voxel.
pub fn make_coil_maps(dims: Dims, n_coils: usize, seed: u64) -> Result<CoilMaps> {
    if n_coils == 0 {
        return Err(Error::InvalidArgument("n_coils must be >= 1".into()));
    }
    let (nx, ny, nz) = dims;
    let n = voxel_count(dims);
    let mut rng = SplitMix64::new(seed);

    let mut mags = vec![0.0f64; n_coils * n];
    let mut phases = vec![0.0f64; n_coils * n];
    for c in 0..n_coils {
        // Lobe centers ring the (y, z) plane at mid-readout.
        let theta = TAU * (c as f64 + 0.5) / n_coils as f64 + rng.range_f64(-0.1, 0.1);
        let py = 0.5 * ny as f64 + 0.65 * ny as f64 * theta.cos();
        let pz = 0.5 * nz as f64 + 0.65 * nz as f64 * theta.sin();
        let px = 0.5 * nx as f64 + rng.range_f64(-0.1, 0.1) * nx as f64;
        let sigma = rng.range_f64(0.40, 0.55) * (nx.max(ny).max(nz)) as f64;
        // Phase ramps span a few cycles over the FOV; their coil-to-coil
        // differences are what let the array separate aliased voxels.
        let kx = rng.range_f64(-3.0, 3.0) * std::f64::consts::PI;
        let ky = rng.range_f64(-3.0, 3.0) * std::f64::consts::PI;
        let kz = rng.range_f64(-3.0, 3.0) * std::f64::consts::PI;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    let d2 = (x as f64 - px).powi(2)
                        + (y as f64 - py).powi(2)
                        + (z as f64 - pz).powi(2);
                    mags[c * n + i] = 0.08 + (-d2 / (2.0 * sigma * sigma)).exp();
                    phases[c * n + i] = kx * x as f64 / nx as f64
                        + ky * y as f64 / ny as f64
                        + kz * z as f64 / nz as f64;
                }
            }
        }
    }

    let mut data = vec![Complex64::new(0.0, 0.0); n_coils * n];
    for v in 0..n {
        let sos: f64 = (0..n_coils).map(|c| mags[c * n + v] * mags[c * n + v]).sum();
        let s = sos.sqrt();
        for c in 0..n_coils {
            let m = mags[c * n + v] / s;
            let p = phases[c * n + v];
            data[c * n + v] = Complex64::new(m * p.cos(), m * p.sin());
        }
    }
    CoilMaps::new(n_coils, dims, data)
}

/// y = D(Ax + noise) with complex white Gaussian noise on the sampled
/// positions, scaled so ||noise|| = l * ||Ax|| exactly. l = 0 returns the
/// clean forward projection bitwise.
pub fn simulate_kspace(
    x: &ComplexVolume,
    model: &ForwardModel,
    noise_level: f64,
    seed: u64,
) -> Result<KSpaceData> {
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level {noise_level} must be >= 0"
        )));
    }
    let mut y = model.apply_forward(x)?;
    if noise_level == 0.0 {
        return Ok(y);
    }
    let clean_norm = norm2(&y);
    if clean_norm == 0.0 {
        return Ok(y);
    }

    let dims = model.dims();
    let (nx, ny, nz) = dims;
    let mask = model.mask().clone();
    let mut rng = SplitMix64::new(seed);
    let mut noise = vec![Complex64::new(0.0, 0.0); model.ncoils() * voxel_count(dims)];
    let mut noise_sq = 0.0f64;
    for c in 0..model.ncoils() {
        for z in 0..nz {
            for yy in 0..ny {
                if !mask.is_sampled(yy, z) {
                    continue;
                }
                for x_i in 0..nx {
                    let (re, im) = rng.normal_pair();
                    let i = x_i + nx * (yy + ny * (z + nz * c));
                    noise[i] = Complex64::new(re, im);
                    noise_sq += re * re + im * im;
                }
            }
        }
    }
    let scale = noise_level * clean_norm / noise_sq.sqrt();
    for (v, e) in y.data_mut().iter_mut().zip(noise.iter()) {
        *v += scale * e;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SamplingMask;
    use crate::sampling::{generate_poisson_mask, MaskConfig};
    use crate::volume::axpy;

    const DIMS: Dims = (32, 32, 16);

    #[test]
    fn phantom_peak_magnitude_is_exactly_one() {
        for seed in [1u64, 7, 42, 1234] {
            let p = make_phantom(DIMS, seed);
            assert_eq!(p.max_abs(), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn phantom_is_deterministic() {
        let a = make_phantom(DIMS, 9);
        let b = make_phantom(DIMS, 9);
        assert_eq!(a.data(), b.data());
        let c = make_phantom(DIMS, 10);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn phantom_support_fraction_in_range() {
        for seed in [1u64, 7, 42, 1234, 71] {
            let p = make_phantom(DIMS, seed);
            let support = p.data().iter().filter(|v| v.norm() > 0.05).count() as f64
                / p.len() as f64;
            assert!(
                (0.1..=0.6).contains(&support),
                "seed {seed}: support fraction {support}"
            );
        }
    }

    #[test]
    fn phantom_has_nontrivial_phase() {
        let p = make_phantom(DIMS, 3);
        let im_energy: f64 = p.data().iter().map(|v| v.im * v.im).sum();
        assert!(im_energy > 0.0);
    }

    #[test]
    fn coil_maps_sum_of_squares_is_one() {
        let maps = make_coil_maps(DIMS, 4, 5).unwrap();
        let n = voxel_count(DIMS);
        for v in 0..n {
            let sos: f64 = (0..4).map(|c| maps.coil(c)[v].norm_sqr()).sum();
            assert!((sos - 1.0).abs() < 1e-12, "voxel {v}: {sos}");
        }
    }

    #[test]
    fn single_coil_map_is_phase_only() {
        let maps = make_coil_maps(DIMS, 1, 6).unwrap();
        for v in maps.coil(0) {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coil_maps_vary_smoothly() {
        let maps = make_coil_maps(DIMS, 4, 7).unwrap();
        let (nx, ny, nz) = DIMS;
        let mut max_step = 0.0f64;
        for c in 0..4 {
            let m = maps.coil(c);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let i = x + nx * (y + ny * z);
                        let here = m[i].norm();
                        if x + 1 < nx {
                            max_step = max_step.max((m[i + 1].norm() - here).abs());
                        }
                        if y + 1 < ny {
                            max_step = max_step.max((m[i + nx].norm() - here).abs());
                        }
                        if z + 1 < nz {
                            max_step = max_step.max((m[i + nx * ny].norm() - here).abs());
                        }
                    }
                }
            }
        }
        assert!(max_step < 0.2, "max voxel-to-voxel step {max_step}");
    }

    fn test_model() -> ForwardModel {
        let maps = make_coil_maps(DIMS, 3, 11).unwrap();
        let mask = generate_poisson_mask(
            &MaskConfig::new(DIMS.1, DIMS.2, 4.0, 13).with_center(8, 4),
        )
        .unwrap()
        .mask;
        ForwardModel::new(maps, mask).unwrap()
    }

    #[test]
    fn noiseless_simulation_is_the_forward_projection() {
        let model = test_model();
        let x = make_phantom(DIMS, 17);
        let clean = model.apply_forward(&x).unwrap();
        let sim = simulate_kspace(&x, &model, 0.0, 23).unwrap();
        assert_eq!(sim.data(), clean.data());
    }

    #[test]
    fn noise_norm_matches_requested_level() {
        let model = test_model();
        let x = make_phantom(DIMS, 17);
        let clean = model.apply_forward(&x).unwrap();
        for l in [0.02, 0.05] {
            let sim = simulate_kspace(&x, &model, l, 29).unwrap();
            let diff = axpy(Complex64::new(-1.0, 0.0), &clean, &sim).unwrap();
            let ratio = norm2(&diff) / norm2(&clean);
            assert!((ratio - l).abs() < 1e-12, "l {l}: ratio {ratio}");
        }
    }

    #[test]
    fn noise_respects_the_mask() {
        let model = test_model();
        let x = make_phantom(DIMS, 17);
        let sim = simulate_kspace(&x, &model, 0.05, 31).unwrap();
        let mask = model.mask();
        let (nx, ny, nz) = DIMS;
        for c in 0..model.ncoils() {
            for z in 0..nz {
                for y in 0..ny {
                    if !mask.is_sampled(y, z) {
                        for x_i in 0..nx {
                            let v = sim.coil(c)[x_i + nx * (y + ny * z)];
                            assert_eq!(v, Complex64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_mask_single_coil_recovers_phantom_via_adjoint() {
        let maps = make_coil_maps(DIMS, 1, 3).unwrap();
        let model = ForwardModel::new(maps, SamplingMask::full(DIMS.1, DIMS.2)).unwrap();
        let x = make_phantom(DIMS, 5);
        let y = simulate_kspace(&x, &model, 0.0, 1).unwrap();
        let back = model.apply_adjoint(&y).unwrap();
        let err = crate::metrics::nmse(&back, &x).unwrap();
        assert!(err < 1e-24, "round-trip nmse {err}");
    }
}
