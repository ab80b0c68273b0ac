//! Pseudorandom Poisson-disc undersampling masks with a fully sampled center.
//!
//! Generation is dart throwing over the (ky, kz) plane with a rejection
//! radius r: candidates are drawn uniformly (outside the center block) and
//! accepted only if no earlier point lies within distance r. Throwing stops
//! once the sample budget implied by the target acceleration is reached, and
//! a bounded bisection on r finds the largest radius that still fills the
//! budget (saturated density on an integer grid is a staircase in r, so the
//! budget cap is what pins the acceleration). The center block is force-set
//! afterwards. Density is uniform outside the center.
//!
//! Every draw comes from the documented splitmix generator in [`crate::rng`]
//! and the candidate sequence does not depend on r, so masks are reproducible
//! bit for bit from (config, seed).

use crate::error::{Error, Result};
use crate::forward::SamplingMask;
use crate::rng::SplitMix64;

/// Mask generation parameters.
#[derive(Debug, Clone)]
pub struct MaskConfig {
    pub ny: usize,
    pub nz: usize,
    /// Target acceleration R = ny*nz / samples, >= 1.
    pub accel: f64,
    /// Fully sampled center block size (cy, cz).
    pub center: (usize, usize),
    pub seed: u64,
    /// Relative tolerance on the achieved acceleration.
    pub tolerance: f64,
}

impl MaskConfig {
    pub fn new(ny: usize, nz: usize, accel: f64, seed: u64) -> Self {
        Self {
            ny,
            nz,
            accel,
            center: (24, 24),
            seed,
            tolerance: 0.05,
        }
    }

    pub fn with_center(mut self, cy: usize, cz: usize) -> Self {
        self.center = (cy, cz);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidArgument("empty mask grid".into()));
        }
        if self.center.0 > self.ny || self.center.1 > self.nz {
            return Err(Error::InvalidArgument(format!(
                "center {}x{} exceeds grid {}x{}",
                self.center.0, self.center.1, self.ny, self.nz
            )));
        }
        if !(self.accel >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "acceleration {} must be >= 1",
                self.accel
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A generated mask plus the metadata the generator settled on.
#[derive(Debug, Clone)]
pub struct GeneratedMask {
    pub mask: SamplingMask,
    /// Minimum pairwise distance enforced between samples outside the center.
    /// Values <= 1 impose no constraint on an integer grid.
    pub min_distance: f64,
    pub effective_accel: f64,
}

/// Attempts per grid cell; enough to saturate dart throwing in practice.
const ATTEMPTS_PER_CELL: usize = 20;
const BISECTION_STEPS: usize = 30;

pub fn generate_poisson_mask(cfg: &MaskConfig) -> Result<GeneratedMask> {
    cfg.validate()?;
    let ncells = cfg.ny * cfg.nz;
    if cfg.accel == 1.0 {
        let mask = SamplingMask::new(cfg.ny, cfg.nz, cfg.center, vec![true; ncells])?;
        return Ok(GeneratedMask {
            mask,
            min_distance: 1.0,
            effective_accel: 1.0,
        });
    }

    // count in [min_count, max_count] <=> effective R within tolerance.
    let target = ((ncells as f64 / cfg.accel).round() as usize).max(1);
    let min_count = (ncells as f64 / (cfg.accel * (1.0 + cfg.tolerance))).ceil() as usize;
    let max_count = (ncells as f64 / (cfg.accel * (1.0 - cfg.tolerance))).floor() as usize;
    let center_count = cfg.center.0 * cfg.center.1;
    if center_count > max_count {
        return Err(Error::MaskAcceleration {
            target: cfg.accel,
            achieved: ncells as f64 / center_count as f64,
        });
    }
    let budget = target.saturating_sub(center_count);
    let feasible = |t: &Throw| t.count + center_count >= min_count;

    // r = 1 imposes no constraint on an integer grid, so the budget fills
    // unless the attempt allowance itself is too small.
    let mut lo = 1.0f64;
    let mut lo_throw = throw_darts(cfg, lo, budget);
    if !feasible(&lo_throw) {
        return Err(Error::MaskAcceleration {
            target: cfg.accel,
            achieved: ncells as f64 / (lo_throw.count + center_count) as f64,
        });
    }
    let mut hi = ((cfg.ny * cfg.ny + cfg.nz * cfg.nz) as f64).sqrt() + 1.0;
    let hi_throw = throw_darts(cfg, hi, budget);
    if feasible(&hi_throw) {
        lo = hi;
        lo_throw = hi_throw;
    } else {
        for _ in 0..BISECTION_STEPS {
            let r = 0.5 * (lo + hi);
            let throw = throw_darts(cfg, r, budget);
            if feasible(&throw) {
                lo = r;
                lo_throw = throw;
            } else {
                hi = r;
            }
        }
    }

    let r = lo;
    let count = lo_throw.count + center_count;
    let effective = ncells as f64 / count as f64;
    if (effective - cfg.accel).abs() > cfg.tolerance * cfg.accel {
        return Err(Error::MaskAcceleration {
            target: cfg.accel,
            achieved: effective,
        });
    }

    let mut data = lo_throw.occupied;
    let (y0, z0) = ((cfg.ny - cfg.center.0) / 2, (cfg.nz - cfg.center.1) / 2);
    for z in z0..z0 + cfg.center.1 {
        for y in y0..y0 + cfg.center.0 {
            data[y + cfg.ny * z] = true;
        }
    }
    let mask = SamplingMask::new(cfg.ny, cfg.nz, cfg.center, data)?;
    Ok(GeneratedMask {
        mask,
        min_distance: r,
        effective_accel: effective,
    })
}

#[derive(Debug)]
struct Throw {
    occupied: Vec<bool>,
    count: usize,
}

/// One dart-throwing pass at fixed radius, stopping at `budget` accepted
/// points. The candidate stream is the same for every radius.
fn throw_darts(cfg: &MaskConfig, r: f64, budget: usize) -> Throw {
    let (ny, nz) = (cfg.ny, cfg.nz);
    let ncells = ny * nz;
    let mut occupied = vec![false; ncells];
    if budget == 0 {
        return Throw { occupied, count: 0 };
    }
    let (y0, z0) = ((ny - cfg.center.0) / 2, (nz - cfg.center.1) / 2);
    let in_center = |y: usize, z: usize| {
        y >= y0 && y < y0 + cfg.center.0 && z >= z0 && z < z0 + cfg.center.1
    };

    let mut rng = SplitMix64::new(cfg.seed);
    let mut points: Vec<(i64, i64)> = Vec::new();
    let r2 = r * r;
    let rb = r.floor() as i64;
    let box_cells = ((2 * rb + 1) * (2 * rb + 1)) as usize;

    for _ in 0..ATTEMPTS_PER_CELL * ncells {
        let y = rng.below(ny as u64) as usize;
        let z = rng.below(nz as u64) as usize;
        if in_center(y, z) || occupied[y + ny * z] {
            continue;
        }
        let conflict = if points.len() < box_cells {
            points.iter().any(|&(py, pz)| {
                let dy = py - y as i64;
                let dz = pz - z as i64;
                ((dy * dy + dz * dz) as f64) < r2
            })
        } else {
            let mut hit = false;
            'scan: for dz in -rb..=rb {
                let zz = z as i64 + dz;
                if zz < 0 || zz >= nz as i64 {
                    continue;
                }
                for dy in -rb..=rb {
                    let yy = y as i64 + dy;
                    if yy < 0 || yy >= ny as i64 {
                        continue;
                    }
                    if ((dy * dy + dz * dz) as f64) < r2
                        && occupied[yy as usize + ny * zz as usize]
                    {
                        hit = true;
                        break 'scan;
                    }
                }
            }
            hit
        };
        if conflict {
            continue;
        }
        occupied[y + ny * z] = true;
        points.push((y as i64, z as i64));
        if points.len() >= budget {
            break;
        }
    }
    Throw {
        count: points.len(),
        occupied,
    }
}

/// Effective acceleration ny*nz / count(true).
pub fn mask_acceleration(mask: &SamplingMask) -> f64 {
    (mask.ny() * mask.nz()) as f64 / mask.count_sampled() as f64
}
