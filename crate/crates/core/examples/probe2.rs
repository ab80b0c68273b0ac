// Scratch probe #2: calibrate fixtures for the equivalence, convergence,
// noise-ordering, and alpha-stability checks.

use darcs_core::forward::ForwardModel;
use darcs_core::metrics::nmse;
use darcs_core::sampling::{generate_poisson_mask, MaskConfig};
use darcs_core::solvers::*;
use darcs_core::synth::{make_coil_maps, make_phantom, simulate_kspace};
use darcs_core::transforms::OracleResidual;
use darcs_core::volume::Dims;

const DIMS: Dims = (64, 64, 16);

fn model(coils: usize, accel: f64, center: (usize, usize), seed: u64) -> ForwardModel {
    let maps = make_coil_maps(DIMS, coils, 5).unwrap();
    let mask = generate_poisson_mask(
        &MaskConfig::new(DIMS.1, DIMS.2, accel, seed).with_center(center.0, center.1),
    )
    .unwrap()
    .mask;
    ForwardModel::new(maps, mask).unwrap()
}

fn oracle_sched(alpha: f64, beta: f64, t: usize) -> ReconSchedule {
    let mut s = ReconSchedule::two_stage_default(0);
    for st in s.stages.iter_mut() {
        st.alpha = alpha;
        st.beta = beta;
    }
    s.t_total = t;
    s
}

fn main() {
    let gt = make_phantom(DIMS, 71);
    let oracle = OracleResidual::new(gt.clone());

    // ---- criterion 4: alpha=0 equivalence, 4 coils pinned, mu free
    let m4 = model(4, 4.0, (8, 4), 7);
    let y4 = simulate_kspace(&gt, &m4, 0.0, 11).unwrap();
    let sense_hi = recon_sense(&y4, &m4, 1e-12, 2000).unwrap();
    for mu in [1e-3, 1e-4, 1e-5] {
        let sched = ReconSchedule {
            cg_tol: 1e-10,
            cg_maxiter: 200,
            ..ReconSchedule::single_stage(0.0, mu, 2, 0.01, 20)
        };
        let run = admm_darcs(&y4, &m4, &sched, &[&oracle], None, false).unwrap();
        eprintln!(
            "c4 mu={mu:.0e}: nmse(darcs0, sense) = {:.3e}",
            nmse(&run.recon, &sense_hi).unwrap()
        );
    }

    // ---- criterion 6: oracle convergence at R=8
    for coils in [4usize, 8] {
        let m8 = model(coils, 8.0, (8, 4), 9);
        let y8 = simulate_kspace(&gt, &m8, 0.0, 13).unwrap();
        for alpha in [0.3, 0.5] {
            let run = admm_darcs(
                &y8,
                &m8,
                &oracle_sched(alpha, 0.01, 20),
                &[&oracle],
                Some(&gt),
                false,
            )
            .unwrap();
            let tr: Vec<f64> = run.trace.iter().map(|r| r.nmse.unwrap()).collect();
            let mono = tr.windows(2).all(|w| w[1] <= w[0] + 1e-3);
            eprintln!(
                "c6 coils={coils} alpha={alpha}: final {:.3e} monotone {}",
                tr.last().unwrap(),
                mono
            );
        }
    }

    // ---- criterion 10: noise ordering, all below zero-filled
    for coils in [8usize, 12] {
        let m8 = model(coils, 8.0, (8, 4), 9);
        for alpha in [0.3, 0.5] {
            let mut line = format!("c10 coils={coils} alpha={alpha}:");
            let mut ok = true;
            let mut prev = -1.0;
            for l in [0.0, 0.02, 0.05] {
                let yn = simulate_kspace(&gt, &m8, l, 17).unwrap();
                let run = admm_darcs(
                    &yn,
                    &m8,
                    &oracle_sched(alpha, 0.01, 20),
                    &[&oracle],
                    None,
                    false,
                )
                .unwrap();
                let d = nmse(&run.recon, &gt).unwrap();
                let zf = nmse(&recon_zero_filled(&yn, &m8).unwrap(), &gt).unwrap();
                ok &= d < zf && d > prev;
                prev = d;
                line.push_str(&format!(" l={l}: darcs {d:.3e} zf {zf:.3e};"));
            }
            eprintln!("{line} ordering_ok={ok}");
        }
    }

    // ---- criterion 11: alpha sweep ratio for candidate configs
    let alphas = [0.005, 0.05, 0.1, 0.5, 1.0];
    for (coils, center, l, beta, t) in [
        (8usize, (8usize, 4usize), 0.0f64, 1e-4f64, 20usize),
        (8, (8, 4), 0.02, 1e-4, 20),
        (12, (12, 6), 0.02, 1e-3, 20),
        (12, (12, 6), 0.02, 0.01, 20),
        (8, (8, 4), 0.02, 1e-3, 20),
        (12, (12, 6), 0.0, 1e-3, 20),
    ] {
        let m8 = model(coils, 8.0, center, 9);
        let yn = simulate_kspace(&gt, &m8, l, 17).unwrap();
        let mut vals = Vec::new();
        for &a in &alphas {
            let run = admm_darcs(
                &yn,
                &m8,
                &oracle_sched(a, beta, t),
                &[&oracle],
                None,
                false,
            )
            .unwrap();
            vals.push(nmse(&run.recon, &gt).unwrap());
        }
        let ratio = vals.iter().cloned().fold(0.0f64, f64::max)
            / vals.iter().cloned().fold(f64::INFINITY, f64::min);
        eprintln!(
            "c11 coils={coils} center={center:?} l={l} beta={beta:.0e} T={t}: vals {:?} ratio {ratio:.2}",
            vals.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
        );
    }
}
