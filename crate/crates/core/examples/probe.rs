// Scratch probe for fixture calibration; not part of the test suite.

use darcs_core::forward::{ForwardModel, SamplingMask};
use darcs_core::metrics::nmse;
use darcs_core::net::fixtures;
use darcs_core::sampling::{generate_poisson_mask, MaskConfig};
use darcs_core::solvers::*;
use darcs_core::synth::{make_coil_maps, make_phantom, simulate_kspace};
use darcs_core::transforms::{
    sparsity_fraction, LearnedResidual, OracleResidual, SparsifyingTransform,
};
use darcs_core::volume::Dims;

const DIMS: Dims = (64, 64, 16);

fn model_at(accel: f64, seed: u64) -> ForwardModel {
    let maps = make_coil_maps(DIMS, 4, 5).unwrap();
    let mask = generate_poisson_mask(
        &MaskConfig::new(DIMS.1, DIMS.2, accel, seed).with_center(8, 4),
    )
    .unwrap();
    eprintln!(
        "mask R={} -> effective {:.3}, r_min {:.3}, count {}",
        accel,
        mask.effective_accel,
        mask.min_distance,
        mask.mask.count_sampled()
    );
    ForwardModel::new(maps, mask.mask).unwrap()
}

fn main() {
    let t0 = std::time::Instant::now();
    let gt = make_phantom(DIMS, 71);
    let support = gt.data().iter().filter(|v| v.norm() > 0.05).count() as f64
        / gt.len() as f64;
    eprintln!("phantom support fraction {support:.3}, max {}", gt.max_abs());

    // ---- criterion 4 probe: alpha = 0 equivalence at R=4
    let model4 = model_at(4.0, 7);
    let y4 = simulate_kspace(&gt, &model4, 0.0, 11).unwrap();
    let oracle = OracleResidual::new(gt.clone());
    let sched0 = ReconSchedule::single_stage(0.0, 0.005, 2, 0.01, 20);
    let darcs0 = admm_darcs(&y4, &model4, &sched0, &[&oracle], Some(&gt), false).unwrap();
    let sense = recon_sense(&y4, &model4, 1e-8, 200).unwrap();
    eprintln!(
        "alpha=0: nmse(darcs0 vs sense) = {:.3e}; nmse(darcs0, gt) = {:.3e}; nmse(sense, gt) = {:.3e}",
        nmse(&darcs0.recon, &sense).unwrap(),
        nmse(&darcs0.recon, &gt).unwrap(),
        nmse(&sense, &gt).unwrap()
    );

    // ---- criterion 5 probe: full mask exact recovery
    let full_model = ForwardModel::new(
        make_coil_maps(DIMS, 4, 5).unwrap(),
        SamplingMask::full(DIMS.1, DIMS.2),
    )
    .unwrap();
    let yf = simulate_kspace(&gt, &full_model, 0.0, 1).unwrap();
    let zf_full = recon_zero_filled(&yf, &full_model).unwrap();
    let sense_full = recon_sense(&yf, &full_model, 1e-8, 100).unwrap();
    let zero_net = fixtures::zero_residual();
    let lr = LearnedResidual::new(zero_net.clone());
    let sched_def = ReconSchedule::single_stage(0.1, 0.005, 2, 0.01, 20);
    let darcs_full = admm_darcs(&yf, &full_model, &sched_def, &[&lr], Some(&gt), false).unwrap();
    eprintln!(
        "full mask: zf {:.3e} sense {:.3e} darcs(zero-net) {:.3e}",
        nmse(&zf_full, &gt).unwrap(),
        nmse(&sense_full, &gt).unwrap(),
        nmse(&darcs_full.recon, &gt).unwrap()
    );
    // also oracle-transform on full mask
    let darcs_full_o = admm_darcs(&yf, &full_model, &sched_def, &[&oracle], Some(&gt), false).unwrap();
    eprintln!("full mask darcs(oracle) {:.3e}", nmse(&darcs_full_o.recon, &gt).unwrap());

    // ---- criterion 6 probe: oracle convergence at R=8
    let model8 = model_at(8.0, 9);
    let y8 = simulate_kspace(&gt, &model8, 0.0, 13).unwrap();
    let zf8 = recon_zero_filled(&y8, &model8).unwrap();
    eprintln!("R=8 zero-filled nmse {:.3e}", nmse(&zf8, &gt).unwrap());
    let two_stage = ReconSchedule::two_stage_default(0);
    let run8 = admm_darcs(&y8, &model8, &two_stage, &[&oracle], Some(&gt), false).unwrap();
    let tr: Vec<f64> = run8.trace.iter().map(|r| r.nmse.unwrap()).collect();
    eprintln!("R=8 oracle trace nmse: {:?}", tr);

    // ---- criterion 11 probe: alpha sweep
    let mut sweep = Vec::new();
    for alpha in [0.005, 0.05, 0.1, 0.5, 1.0] {
        let mut sched = ReconSchedule::two_stage_default(0);
        for s in sched.stages.iter_mut() {
            s.alpha = alpha;
        }
        let run = admm_darcs(&y8, &model8, &sched, &[&oracle], Some(&gt), false).unwrap();
        let v = nmse(&run.recon, &gt).unwrap();
        sweep.push(v);
        eprintln!("alpha {alpha}: final nmse {v:.4e}");
    }
    let ratio = sweep.iter().cloned().fold(0.0f64, f64::max)
        / sweep.iter().cloned().fold(f64::INFINITY, f64::min);
    eprintln!("alpha sweep max/min ratio {ratio:.3}");

    // ---- criterion 10 probe: noise ordering at R=8
    for l in [0.0, 0.02, 0.05] {
        let yn = simulate_kspace(&gt, &model8, l, 17).unwrap();
        let run = admm_darcs(&yn, &model8, &two_stage, &[&oracle], None, false).unwrap();
        let zfn = recon_zero_filled(&yn, &model8).unwrap();
        eprintln!(
            "noise {l}: darcs {:.4e} zf {:.4e}",
            nmse(&run.recon, &gt).unwrap(),
            nmse(&zfn, &gt).unwrap()
        );
    }

    // ---- criterion 7 probe: sparsity contrast with blur-residual net
    for (k, sigma) in [(5usize, 1.0f64), (5, 1.5), (7, 2.0)] {
        let blur = LearnedResidual::new(fixtures::gaussian_blur(k, sigma));
        let t_gt = blur.forward(&gt).unwrap();
        let t_zf = blur.forward(&zf8).unwrap();
        eprintln!(
            "blur k={k} sigma={sigma}: sparsity(gt) {:.3} sparsity(zf) {:.3}",
            sparsity_fraction(&t_gt, 0.1),
            sparsity_fraction(&t_zf, 0.1)
        );
    }

    // ---- criterion 8 probe: ordering at R=4
    let run4 = admm_darcs(&y4, &model4, &two_stage, &[&oracle], None, false).unwrap();
    let zf4 = recon_zero_filled(&y4, &model4).unwrap();
    eprintln!(
        "R=4: darcs(oracle) {:.4e}, zf {:.4e}",
        nmse(&run4.recon, &gt).unwrap(),
        nmse(&zf4, &gt).unwrap()
    );
    for alpha in [1e-3, 3e-3, 1e-2, 3e-2, 1e-1] {
        let cs = recon_cs(&y4, &model4, CsSparsifier::Haar { levels: 2 }, alpha, 0.005, 20).unwrap();
        eprintln!("cs-haar alpha {alpha}: {:.4e}", nmse(&cs.recon, &gt).unwrap());
    }

    // ---- ADMM feasibility probe
    let last = run8.trace.last().unwrap();
    eprintln!(
        "R=8 last iter: data_resid {:.3e} reg {:.3e}",
        last.data_resid, last.reg_value
    );
    eprintln!("total probe time {:.1?}", t0.elapsed());
}
