//! The numerical core: conjugate gradients for the data-fidelity subproblem,
//! the gradient-descent proximal step for the learned regularizer, the ADMM
//! driver with stage-adaptive schedules, and the baseline reconstructors.
//!
//! Every ADMM-based method shares one engine so that degenerate cases line
//! up bitwise (for example, the learned method with zero regularization
//! weight walks the exact same iterate sequence as plug-and-play with an
//! identity network). The engine initializes x to A^H y and z, u to zero,
//! warm-starts each CG solve from the previous x, and returns the final z.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::metrics;
use crate::net::Network;
use crate::transforms::{
    channel_sign, finite_difference_forward, haar_dwt_forward, haar_dwt_inverse, soft_threshold,
    Coefficients, FiniteDifference, SparsifyingTransform,
};
use crate::volume::{norm1, norm2, vdot, ComplexVolume, KSpaceData, VoxelData};

pub const DEFAULT_CG_TOL: f64 = 1e-6;
pub const DEFAULT_CG_MAXITER: usize = 50;

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: ComplexVolume,
    pub iterations: usize,
    /// ||op(x) - rhs|| / ||rhs|| at exit (by the residual recurrence).
    pub rel_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients on a Hermitian positive definite operator. Inner
/// products take the real part of the complex dot product. A zero right-hand
/// side returns zero immediately.
pub fn cg_solve<F>(
    op: F,
    rhs: &ComplexVolume,
    x0: &ComplexVolume,
    tol: f64,
    maxiter: usize,
) -> Result<CgResult>
where
    F: Fn(&ComplexVolume) -> Result<ComplexVolume>,
{
    if rhs.dims() != x0.dims() {
        return Err(Error::ShapeMismatch(format!(
            "rhs {:?} vs x0 {:?}",
            rhs.dims(),
            x0.dims()
        )));
    }
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(CgResult {
            x: ComplexVolume::zeros(rhs.dims()),
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        });
    }

    let mut x = x0.clone();
    let ax = op(&x)?;
    let mut r = rhs.clone();
    r.axpy_in_place(Complex64::new(-1.0, 0.0), &ax)?;
    let mut p = r.clone();
    let mut rs = vdot(&r, &r)?.re;
    if !rs.is_finite() {
        return Err(Error::NonFinite("cg residual".into()));
    }

    let mut iterations = 0;
    let mut rel = rs.sqrt() / bnorm;
    while rel > tol && iterations < maxiter {
        let ap = op(&p)?;
        let pap = vdot(&p, &ap)?.re;
        if !pap.is_finite() {
            return Err(Error::NonFinite("cg curvature".into()));
        }
        if pap <= 0.0 {
            // Indefinite direction: the operator violates the caller's
            // guarantee (or we are at roundoff level); stop here.
            break;
        }
        let alpha = rs / pap;
        x.axpy_in_place(Complex64::new(alpha, 0.0), &p)?;
        r.axpy_in_place(Complex64::new(-alpha, 0.0), &ap)?;
        let rs_new = vdot(&r, &r)?.re;
        if !rs_new.is_finite() {
            return Err(Error::NonFinite("cg residual".into()));
        }
        let beta = rs_new / rs;
        p = crate::volume::axpy(Complex64::new(beta, 0.0), &p, &r)?;
        rs = rs_new;
        iterations += 1;
        rel = rs.sqrt() / bnorm;
    }
    Ok(CgResult {
        x,
        iterations,
        rel_residual: rel,
        converged: rel <= tol,
    })
}

/// K fixed-step subgradient-descent updates of
/// mu ||z - anchor||^2 + alpha ||t(z)||_1, starting from z0.
/// The gradient is 2 mu (z - anchor) + alpha pullback(z, sign(t(z))) with a
/// channelwise sign that vanishes on exact zeros.
pub fn prox_gd(
    z0: &ComplexVolume,
    anchor: &ComplexVolume,
    transform: &dyn SparsifyingTransform,
    alpha: f64,
    mu: f64,
    k_steps: usize,
    beta: f64,
) -> Result<ComplexVolume> {
    if z0.dims() != anchor.dims() {
        return Err(Error::ShapeMismatch(format!(
            "z0 {:?} vs anchor {:?}",
            z0.dims(),
            anchor.dims()
        )));
    }
    let mut z = z0.clone();
    let mut grad = ComplexVolume::zeros(z.dims());
    for _ in 0..k_steps {
        for ((g, zv), av) in grad
            .data_mut()
            .iter_mut()
            .zip(z.data().iter())
            .zip(anchor.data().iter())
        {
            *g = 2.0 * mu * (zv - av);
        }
        if alpha != 0.0 {
            let t = transform.forward(&z)?;
            let s = channel_sign(&t);
            let pb = transform.pullback(&z, &s)?;
            grad.axpy_in_place(Complex64::new(alpha, 0.0), &pb)?;
        }
        grad.check_finite("prox_gd gradient")?;
        z.axpy_in_place(Complex64::new(-beta, 0.0), &grad)?;
    }
    Ok(z)
}

/// One parameter stage of the ADMM schedule, active from `start_iter`
/// (1-based) until the next stage begins.
#[derive(Debug, Clone)]
pub struct Stage {
    pub start_iter: usize,
    pub alpha: f64,
    pub mu: f64,
    pub k_steps: usize,
    pub beta: f64,
    pub transform_index: usize,
}

#[derive(Debug, Clone)]
pub struct ReconSchedule {
    pub stages: Vec<Stage>,
    pub t_total: usize,
    pub cg_tol: f64,
    pub cg_maxiter: usize,
}

impl ReconSchedule {
    pub fn single_stage(alpha: f64, mu: f64, k_steps: usize, beta: f64, t_total: usize) -> Self {
        Self {
            stages: vec![Stage {
                start_iter: 1,
                alpha,
                mu,
                k_steps,
                beta,
                transform_index: 0,
            }],
            t_total,
            cg_tol: DEFAULT_CG_TOL,
            cg_maxiter: DEFAULT_CG_MAXITER,
        }
    }

    /// The stock two-stage schedule: alpha 0.1, mu 0.005, K 2, beta 0.01 for
    /// ten iterations, then the penalty weight doubles to mu 0.01 and the
    /// stage-two transform takes over, for twenty iterations total.
    pub fn two_stage_default(stage2_transform: usize) -> Self {
        Self {
            stages: vec![
                Stage {
                    start_iter: 1,
                    alpha: 0.1,
                    mu: 0.005,
                    k_steps: 2,
                    beta: 0.01,
                    transform_index: 0,
                },
                Stage {
                    start_iter: 11,
                    alpha: 0.1,
                    mu: 0.01,
                    k_steps: 2,
                    beta: 0.01,
                    transform_index: stage2_transform,
                },
            ],
            t_total: 20,
            cg_tol: DEFAULT_CG_TOL,
            cg_maxiter: DEFAULT_CG_MAXITER,
        }
    }

    pub fn validate(&self, n_transforms: usize) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Validation("schedule has no stages".into()));
        }
        if self.stages[0].start_iter != 1 {
            return Err(Error::Validation("first stage must start at iteration 1".into()));
        }
        for pair in self.stages.windows(2) {
            if pair[1].start_iter <= pair[0].start_iter {
                return Err(Error::Validation(
                    "stage start iterations must be strictly increasing".into(),
                ));
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.mu > 0.0) {
                return Err(Error::Validation(format!("stage {i}: mu must be > 0")));
            }
            if !(s.alpha >= 0.0) {
                return Err(Error::Validation(format!("stage {i}: alpha must be >= 0")));
            }
            if s.k_steps == 0 {
                return Err(Error::Validation(format!("stage {i}: K must be >= 1")));
            }
            if !(s.beta > 0.0) {
                return Err(Error::Validation(format!("stage {i}: beta must be > 0")));
            }
            if s.transform_index >= n_transforms {
                return Err(Error::Validation(format!(
                    "stage {i}: transform index {} out of range ({} available)",
                    s.transform_index, n_transforms
                )));
            }
        }
        if !(self.cg_tol > 0.0) || self.cg_maxiter == 0 {
            return Err(Error::Validation("cg tolerance/maxiter invalid".into()));
        }
        Ok(())
    }

    /// The stage active at 1-based outer iteration `iter`.
    pub fn stage_at(&self, iter: usize) -> &Stage {
        let mut active = &self.stages[0];
        for s in &self.stages {
            if s.start_iter <= iter {
                active = s;
            }
        }
        active
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    /// ||y - A x_t||
    pub data_resid: f64,
    /// ||t(z_t)||_1 under the active regularizer (0 when none applies).
    pub reg_value: f64,
    /// NMSE of z_t against the reference, when one was supplied.
    pub nmse: Option<f64>,
}

/// Result of an ADMM run: the final z iterate, the trace, and optionally the
/// per-iteration z states for sparsity-map inspection.
#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub recon: ComplexVolume,
    pub trace: Vec<TraceRow>,
    pub states: Option<Vec<ComplexVolume>>,
}

#[allow(clippy::too_many_arguments)]
fn admm_engine(
    y: &KSpaceData,
    model: &ForwardModel,
    t_total: usize,
    cg_tol: f64,
    cg_maxiter: usize,
    mut mu_of: impl FnMut(usize) -> f64,
    mut z_step: impl FnMut(usize, &ComplexVolume) -> Result<ComplexVolume>,
    mut reg_of: impl FnMut(usize, &ComplexVolume) -> Result<f64>,
    gt: Option<&ComplexVolume>,
    record_states: bool,
) -> Result<AdmmRun> {
    let dims = model.dims();
    let states = record_states.then(Vec::new);
    if t_total == 0 || norm2(y) == 0.0 {
        return Ok(AdmmRun {
            recon: ComplexVolume::zeros(dims),
            trace: Vec::new(),
            states,
        });
    }
    let mut states = states;

    let ahy = model.apply_adjoint(y)?;
    let mut x = ahy.clone();
    let mut z = ComplexVolume::zeros(dims);
    let mut u = ComplexVolume::zeros(dims);
    let mut rhs = ComplexVolume::zeros(dims);
    let mut trace = Vec::with_capacity(t_total);

    for t in 1..=t_total {
        let mu = mu_of(t);

        // Step 1: x = argmin ||y - Ax||^2 + mu ||x - z + u||^2,
        // i.e. (A^H A + mu I) x = A^H y + mu (z - u), warm-started at x.
        for (((r, a), zv), uv) in rhs
            .data_mut()
            .iter_mut()
            .zip(ahy.data().iter())
            .zip(z.data().iter())
            .zip(u.data().iter())
        {
            *r = a + mu * (zv - uv);
        }
        let cg = cg_solve(
            |v| model.apply_normal(mu, v),
            &rhs,
            &x,
            cg_tol,
            cg_maxiter,
        )?;
        x = cg.x;

        // Step 2: proximal update at the anchor x + u.
        let anchor = crate::volume::axpy(Complex64::new(1.0, 0.0), &u, &x)?;
        z = z_step(t, &anchor)?;

        // Step 3: scaled dual ascent.
        for ((uv, xv), zv) in u
            .data_mut()
            .iter_mut()
            .zip(x.data().iter())
            .zip(z.data().iter())
        {
            *uv += xv - zv;
        }

        let ax = model.apply_forward(&x)?;
        let resid = {
            let mut acc = 0.0f64;
            for (a, b) in y.samples().iter().zip(ax.samples().iter()) {
                acc += (a - b).norm_sqr();
            }
            acc.sqrt()
        };
        let reg_value = reg_of(t, &z)?;
        let nm = match gt {
            Some(g) => Some(metrics::nmse(&z, g)?),
            None => None,
        };
        trace.push(TraceRow {
            iter: t,
            data_resid: resid,
            reg_value,
            nmse: nm,
        });
        if let Some(s) = states.as_mut() {
            s.push(z.clone());
        }
    }

    Ok(AdmmRun {
        recon: z,
        trace,
        states,
    })
}

/// ADMM with a (possibly stage-switched) sparsifying-transform regularizer.
/// `transforms` is indexed by the schedule's `transform_index`.
pub fn admm_darcs(
    y: &KSpaceData,
    model: &ForwardModel,
    schedule: &ReconSchedule,
    transforms: &[&dyn SparsifyingTransform],
    gt: Option<&ComplexVolume>,
    record_states: bool,
) -> Result<AdmmRun> {
    schedule.validate(transforms.len())?;
    admm_engine(
        y,
        model,
        schedule.t_total,
        schedule.cg_tol,
        schedule.cg_maxiter,
        |t| schedule.stage_at(t).mu,
        |t, anchor| {
            let s = schedule.stage_at(t);
            prox_gd(
                anchor,
                anchor,
                transforms[s.transform_index],
                s.alpha,
                s.mu,
                s.k_steps,
                s.beta,
            )
        },
        |t, z| {
            let s = schedule.stage_at(t);
            Ok(norm1(&transforms[s.transform_index].forward(z)?))
        },
        gt,
        record_states,
    )
}

/// A^H y.
pub fn recon_zero_filled(y: &KSpaceData, model: &ForwardModel) -> Result<ComplexVolume> {
    model.apply_adjoint(y)
}

/// Least-squares SENSE via CG on A^H A x = A^H y, with a tiny Tikhonov term
/// (mu = 1e-9) for safety on singular geometries.
pub fn recon_sense(
    y: &KSpaceData,
    model: &ForwardModel,
    tol: f64,
    maxiter: usize,
) -> Result<ComplexVolume> {
    let rhs = model.apply_adjoint(y)?;
    let x0 = ComplexVolume::zeros(model.dims());
    let cg = cg_solve(|v| model.apply_normal(1e-9, v), &rhs, &x0, tol, maxiter)?;
    Ok(cg.x)
}

/// Linear sparsifier for the classical compressed-sensing baseline.
#[derive(Debug, Clone, Copy)]
pub enum CsSparsifier {
    /// Orthonormal wavelet: the proximal step is exact soft-thresholding in
    /// the coefficient domain.
    Haar { levels: usize },
    /// Finite differences: no closed-form prox, so the z-update falls back
    /// to `k_steps` subgradient iterations with step `beta`.
    FiniteDifference { k_steps: usize, beta: f64 },
}

/// Classical l1-regularized reconstruction with a linear transform.
pub fn recon_cs(
    y: &KSpaceData,
    model: &ForwardModel,
    sparsifier: CsSparsifier,
    alpha: f64,
    mu: f64,
    t_total: usize,
) -> Result<AdmmRun> {
    if !(alpha >= 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} must be >= 0 and mu {mu} > 0"
        )));
    }
    let tau = alpha / (2.0 * mu);
    admm_engine(
        y,
        model,
        t_total,
        DEFAULT_CG_TOL,
        DEFAULT_CG_MAXITER,
        |_| mu,
        |_, anchor| match sparsifier {
            CsSparsifier::Haar { levels } => {
                let c = haar_dwt_forward(anchor, levels)?;
                let s = soft_threshold(&c, tau)?;
                haar_dwt_inverse(&s, levels)
            }
            CsSparsifier::FiniteDifference { k_steps, beta } => prox_gd(
                anchor,
                anchor,
                &FiniteDifference,
                alpha,
                mu,
                k_steps,
                beta,
            ),
        },
        |_, z| match sparsifier {
            CsSparsifier::Haar { levels } => Ok(norm1(&haar_dwt_forward(z, levels)?)),
            CsSparsifier::FiniteDifference { .. } => Ok(norm1(&finite_difference_forward(z))),
        },
        None,
        false,
    )
}

/// Plug-and-play ADMM: the proximal step is replaced by a forward pass of
/// the supplied network.
pub fn recon_pnp(
    y: &KSpaceData,
    model: &ForwardModel,
    net: &Network,
    mu: f64,
    t_total: usize,
) -> Result<AdmmRun> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu {mu} must be > 0")));
    }
    admm_engine(
        y,
        model,
        t_total,
        DEFAULT_CG_TOL,
        DEFAULT_CG_MAXITER,
        |_| mu,
        |_, anchor| net.forward(anchor),
        |_, _| Ok(0.0),
        None,
        false,
    )
}

/// Single-pass de-aliasing: one network inference on the zero-filled image.
pub fn recon_dagan_direct(
    y: &KSpaceData,
    model: &ForwardModel,
    net: &Network,
) -> Result<ComplexVolume> {
    if norm2(y) == 0.0 {
        return Ok(ComplexVolume::zeros(model.dims()));
    }
    net.forward(&recon_zero_filled(y, model)?)
}

/// Fixed-prior reconstruction: a single de-aliased image x_prior is computed
/// up front and the ADMM then solves ||y - Ax||^2 + alpha ||x - x_prior||_1,
/// whose proximal step is exact shrinkage toward the prior.
pub fn recon_aics(
    y: &KSpaceData,
    model: &ForwardModel,
    net: &Network,
    alpha: f64,
    mu: f64,
    t_total: usize,
) -> Result<AdmmRun> {
    if !(alpha >= 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} must be >= 0 and mu {mu} > 0"
        )));
    }
    let prior = recon_dagan_direct(y, model, net)?;
    let tau = alpha / (2.0 * mu);
    admm_engine(
        y,
        model,
        t_total,
        DEFAULT_CG_TOL,
        DEFAULT_CG_MAXITER,
        |_| mu,
        |_, anchor| {
            let mut diff = anchor.clone();
            diff.axpy_in_place(Complex64::new(-1.0, 0.0), &prior)?;
            let mut z = soft_threshold(&diff, tau)?;
            z.axpy_in_place(Complex64::new(1.0, 0.0), &prior)?;
            Ok(z)
        },
        |_, z| {
            let mut diff = z.clone();
            diff.axpy_in_place(Complex64::new(-1.0, 0.0), &prior)?;
            Ok(norm1(&diff))
        },
        None,
        false,
    )
}

/// Transform coefficients of recorded iterates; the transform must produce
/// single-channel (image-shaped) maps.
pub fn emit_sparsity_maps(
    states: &[ComplexVolume],
    transform: &dyn SparsifyingTransform,
) -> Result<Vec<ComplexVolume>> {
    states
        .iter()
        .map(|z| transform.forward(z)?.into_volume())
        .collect()
}

/// Sparsity map of a single volume; multi-channel transforms are allowed.
pub fn sparsity_map(
    vol: &ComplexVolume,
    transform: &dyn SparsifyingTransform,
) -> Result<Coefficients> {
    transform.forward(vol)
}

/// Trace CSV: `iter,data_resid,reg_value,nmse` with the nmse column blank
/// when no reference was supplied.
pub fn write_trace_csv(w: &mut impl Write, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iter,data_resid,reg_value,nmse")?;
    for row in trace {
        match row.nmse {
            Some(nm) => writeln!(w, "{},{},{},{}", row.iter, row.data_resid, row.reg_value, nm)?,
            None => writeln!(w, "{},{},{},", row.iter, row.data_resid, row.reg_value)?,
        }
    }
    Ok(())
}

pub fn write_trace_csv_path(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace_csv(&mut f, trace)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::fixtures;
    use crate::sampling::{generate_poisson_mask, MaskConfig};
    use crate::synth::{make_coil_maps, make_phantom, simulate_kspace};
    use crate::testutil::random_volume;
    use crate::transforms::{LearnedResidual, OracleResidual};
    use crate::volume::{axpy, Dims};

    const DIMS: Dims = (16, 16, 8);

    fn small_model(accel: f64) -> ForwardModel {
        let maps = make_coil_maps(DIMS, 3, 41).unwrap();
        let mask = generate_poisson_mask(
            &MaskConfig::new(DIMS.1, DIMS.2, accel, 43).with_center(4, 2),
        )
        .unwrap()
        .mask;
        ForwardModel::new(maps, mask).unwrap()
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let rhs = random_volume(DIMS, 1);
        let x0 = ComplexVolume::zeros(DIMS);
        let out = cg_solve(|v| Ok(v.clone()), &rhs, &x0, 1e-10, 50).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.x.data(), rhs.data());
    }

    #[test]
    fn cg_scaled_identity() {
        let mu = 0.02;
        let b = random_volume(DIMS, 2);
        let rhs = axpy(Complex64::new(mu - 1.0, 0.0), &b, &b).unwrap(); // mu * b
        let x0 = ComplexVolume::zeros(DIMS);
        let out = cg_solve(
            |v| {
                let mut s = v.clone();
                s.scale_in_place(Complex64::new(mu, 0.0));
                Ok(s)
            },
            &rhs,
            &x0,
            1e-12,
            50,
        )
        .unwrap();
        let err: f64 = out
            .x
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(a, c)| (a - c).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max err {err}");
    }

    #[test]
    fn cg_zero_rhs_returns_zero_without_iterating() {
        let rhs = ComplexVolume::zeros(DIMS);
        let x0 = random_volume(DIMS, 3);
        let out = cg_solve(|v| Ok(v.clone()), &rhs, &x0, 1e-10, 50).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(norm2(&out.x), 0.0);
    }

    #[test]
    fn cg_rejects_non_finite_operators() {
        let rhs = random_volume(DIMS, 4);
        let x0 = ComplexVolume::zeros(DIMS);
        let res = cg_solve(
            |v| {
                let data = vec![Complex64::new(f64::NAN, 0.0); v.len()];
                Ok(v.with_samples(data))
            },
            &rhs,
            &x0,
            1e-10,
            50,
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn cg_residual_norm_monotone_on_spd_problem() {
        let model = small_model(2.0);
        let gt = make_phantom(DIMS, 5);
        let y = simulate_kspace(&gt, &model, 0.0, 1).unwrap();
        let rhs = model.apply_adjoint(&y).unwrap();
        let x0 = ComplexVolume::zeros(DIMS);
        let mu = 0.01;
        let mut last = f64::INFINITY;
        for iters in 1..=8 {
            let out = cg_solve(|v| model.apply_normal(mu, v), &rhs, &x0, 1e-30, iters).unwrap();
            assert!(
                out.rel_residual <= last * (1.0 + 1e-12),
                "residual rose at {iters}: {} > {last}",
                out.rel_residual
            );
            last = out.rel_residual;
        }
    }

    #[test]
    fn prox_gd_zero_alpha_keeps_anchor_bitwise() {
        let anchor = random_volume(DIMS, 6);
        let t = OracleResidual::new(random_volume(DIMS, 7));
        let z = prox_gd(&anchor, &anchor, &t, 0.0, 0.005, 3, 0.01).unwrap();
        assert_eq!(z.data(), anchor.data());
    }

    #[test]
    fn prox_gd_identity_network_keeps_anchor() {
        let anchor = random_volume(DIMS, 8);
        let t = LearnedResidual::new(fixtures::zero_residual());
        let z = prox_gd(&anchor, &anchor, &t, 0.1, 0.005, 2, 0.01).unwrap();
        assert_eq!(z.data(), anchor.data());
    }

    #[test]
    fn prox_gd_oracle_moves_toward_reference() {
        let gt = make_phantom(DIMS, 9);
        let anchor = axpy(
            Complex64::new(0.2, 0.0),
            &random_volume(DIMS, 10),
            &gt,
        )
        .unwrap();
        let t = OracleResidual::new(gt.clone());
        let z1 = prox_gd(&anchor, &anchor, &t, 0.5, 0.005, 1, 0.01).unwrap();
        let before = norm1(&axpy(Complex64::new(-1.0, 0.0), &gt, &anchor).unwrap());
        let after = norm1(&axpy(Complex64::new(-1.0, 0.0), &gt, &z1).unwrap());
        assert!(after < before, "l1 error {after} !< {before}");
    }

    #[test]
    fn schedule_validation() {
        let mut s = ReconSchedule::two_stage_default(1);
        assert!(s.validate(2).is_ok());
        assert!(s.validate(1).is_err()); // missing second transform
        s.stages[1].start_iter = 1;
        assert!(s.validate(2).is_err()); // not strictly increasing
        let mut s2 = ReconSchedule::single_stage(0.1, 0.0, 2, 0.01, 5);
        assert!(s2.validate(1).is_err()); // mu must be positive
        s2.stages[0].mu = 0.05;
        s2.stages[0].start_iter = 3;
        assert!(s2.validate(1).is_err()); // must start at 1
    }

    #[test]
    fn stage_switching_picks_latest_started_stage() {
        let s = ReconSchedule::two_stage_default(1);
        assert_eq!(s.stage_at(1).mu, 0.005);
        assert_eq!(s.stage_at(10).mu, 0.005);
        assert_eq!(s.stage_at(11).mu, 0.01);
        assert_eq!(s.stage_at(20).mu, 0.01);
    }

    #[test]
    fn zero_measurements_or_zero_iterations_return_zero() {
        let model = small_model(2.0);
        let y0 = KSpaceData::zeros(model.ncoils(), DIMS);
        let t = OracleResidual::new(make_phantom(DIMS, 11));
        let sched = ReconSchedule::single_stage(0.1, 0.005, 2, 0.01, 20);
        let run = admm_darcs(&y0, &model, &sched, &[&t], None, false).unwrap();
        assert_eq!(norm2(&run.recon), 0.0);
        assert!(run.trace.is_empty());

        let gt = make_phantom(DIMS, 11);
        let y = simulate_kspace(&gt, &model, 0.0, 2).unwrap();
        let sched0 = ReconSchedule::single_stage(0.1, 0.005, 2, 0.01, 0);
        let run0 = admm_darcs(&y, &model, &sched0, &[&t], None, false).unwrap();
        assert_eq!(norm2(&run0.recon), 0.0);
        assert!(run0.trace.is_empty());
    }

    #[test]
    fn darcs_zero_alpha_matches_pnp_identity_bitwise() {
        let model = small_model(3.0);
        let gt = make_phantom(DIMS, 12);
        let y = simulate_kspace(&gt, &model, 0.0, 3).unwrap();
        let mu = 0.005;
        let t_total = 6;

        let t = OracleResidual::new(gt.clone());
        let sched = ReconSchedule::single_stage(0.0, mu, 2, 0.01, t_total);
        let darcs = admm_darcs(&y, &model, &sched, &[&t], None, false).unwrap();

        let pnp = recon_pnp(&y, &model, &fixtures::zero_residual(), mu, t_total).unwrap();
        assert_eq!(darcs.recon.data(), pnp.recon.data());
    }

    #[test]
    fn trace_rows_and_csv_format() {
        let model = small_model(2.0);
        let gt = make_phantom(DIMS, 13);
        let y = simulate_kspace(&gt, &model, 0.0, 4).unwrap();
        let t = OracleResidual::new(gt.clone());
        let sched = ReconSchedule::single_stage(0.1, 0.005, 2, 0.01, 3);
        let run = admm_darcs(&y, &model, &sched, &[&t], Some(&gt), true).unwrap();
        assert_eq!(run.trace.len(), 3);
        assert_eq!(run.states.as_ref().unwrap().len(), 3);
        assert!(run.trace.iter().all(|r| r.nmse.is_some()));

        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &run.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,data_resid,reg_value,nmse");
        assert_eq!(lines.count(), 3);

        // Without ground truth the nmse column is blank.
        let run2 = admm_darcs(&y, &model, &sched, &[&t], None, false).unwrap();
        let mut buf2 = Vec::new();
        write_trace_csv(&mut buf2, &run2.trace).unwrap();
        let text2 = String::from_utf8(buf2).unwrap();
        assert!(text2.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn aics_large_alpha_pins_to_prior() {
        let model = small_model(2.0);
        let gt = make_phantom(DIMS, 14);
        let y = simulate_kspace(&gt, &model, 0.0, 5).unwrap();
        let net = fixtures::zero_residual();
        let prior = recon_dagan_direct(&y, &model, &net).unwrap();
        let run = recon_aics(&y, &model, &net, 1e6, 0.005, 5).unwrap();
        let err = crate::metrics::nmse(&run.recon, &prior).unwrap();
        assert!(err < 1e-20, "aics did not pin to prior: {err}");
    }

    #[test]
    fn dagan_direct_zero_net_equals_zero_filled() {
        let model = small_model(2.0);
        let gt = make_phantom(DIMS, 15);
        let y = simulate_kspace(&gt, &model, 0.0, 6).unwrap();
        let net = fixtures::zero_residual();
        let direct = recon_dagan_direct(&y, &model, &net).unwrap();
        let zf = recon_zero_filled(&y, &model).unwrap();
        assert_eq!(direct.data(), zf.data());
    }

    #[test]
    fn emit_sparsity_maps_applies_the_transform() {
        let gt = make_phantom(DIMS, 16);
        let t = OracleResidual::new(gt.clone());
        let states = vec![gt.clone(), ComplexVolume::zeros(DIMS)];
        let maps = emit_sparsity_maps(&states, &t).unwrap();
        assert!(norm2(&maps[0]) < 1e-14);
        let err = crate::metrics::nmse(&maps[1], &gt).unwrap();
        assert!((err - 4.0).abs() < 1e-12); // t(0) = -gt, so ||-gt - gt||^2 = 4 ||gt||^2
    }
}
