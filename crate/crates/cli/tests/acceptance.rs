//! End-to-end pipeline checks through the compiled binary: reproducibility
//! of every artifact byte-for-byte across identical runs, plus the CLI error
//! contract (exit codes and machine-parsable messages).

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_darcs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn darcs binary")
}

fn ok_in(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_fixture_net(path: &Path) {
    let net = darcs_core::net::fixtures::gaussian_blur(5, 1.0);
    darcs_core::net::write_weights(path, &net).unwrap();
}

/// One full pipeline: phantom -> coils -> mask -> simulate -> recon (sense
/// and the learned-transform method) -> eval -> slice -> sparsity. All paths
/// are relative so two runs produce identical provenance records too.
fn run_pipeline(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    write_fixture_net(&dir.join("blur.dwn"));
    ok_in(dir, &["phantom", "--nx", "32", "--ny", "32", "--nz", "16", "--seed", "71", "--out", "gt.cvol"]);
    ok_in(dir, &["coils", "--nx", "32", "--ny", "32", "--nz", "16", "--ncoils", "4", "--seed", "5", "--out", "maps.cvol"]);
    ok_in(dir, &["mask", "--ny", "32", "--nz", "16", "--accel", "4", "--center", "8", "4", "--seed", "7", "--out", "mask.cvol"]);
    ok_in(dir, &["simulate", "--gt", "gt.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol", "--noise", "0.02", "--seed", "11", "--out", "y.cvol"]);
    ok_in(dir, &["recon", "--method", "sense", "--y", "y.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol", "--out", "sense.cvol", "--trace", "sense.csv"]);
    ok_in(dir, &[
        "recon", "--method", "darcs", "--y", "y.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol",
        "--net", "blur.dwn", "--gt", "gt.cvol", "--out", "darcs.cvol", "--trace", "darcs.csv",
        "--save-states", "states",
    ]);
    ok_in(dir, &["eval", "--recon", "darcs.cvol", "--gt", "gt.cvol", "--out", "metrics.json"]);
    ok_in(dir, &["slice", "--vol", "darcs.cvol", "--axis", "z", "--index", "8", "--out", "slice.pgm"]);
    ok_in(dir, &["sparsity", "--vol", "darcs.cvol", "--transform", "net", "--net", "blur.dwn", "--out", "map.cvol"]);
}

fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn criterion_12_pipeline_reproducibility() {
    let started = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let run1 = root.path().join("run1");
    let run2 = root.path().join("run2");
    run_pipeline(&run1);
    run_pipeline(&run2);

    let files1 = collect_files(&run1);
    let files2 = collect_files(&run2);
    assert!(!files1.is_empty());
    assert_eq!(
        files1.iter().map(|f| &f.0).collect::<Vec<_>>(),
        files2.iter().map(|f| &f.0).collect::<Vec<_>>(),
        "file sets differ"
    );
    for ((name1, bytes1), (_, bytes2)) in files1.iter().zip(files2.iter()) {
        assert_eq!(bytes1, bytes2, "file {name1} differs between runs");
    }

    // The reconstruction actually did something: states exist and the trace
    // has one row per outer iteration.
    let trace = std::fs::read_to_string(run1.join("darcs.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21, "header + 20 iterations");
    assert_eq!(std::fs::read_dir(run1.join("states")).unwrap().count(), 20);

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 600,
        "pipeline suite took {elapsed:?}, budget is 10 minutes"
    );
    println!(
        "PASS criterion 12: byte-identical pipeline outputs across two runs ({} files, {elapsed:.1?})",
        files1.len()
    );
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["simulate", "--gt", "nope.cvol", "--maps", "m.cvol", "--mask", "k.cvol", "--out", "y.cvol"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: io:"), "stderr was {err}");
    assert_eq!(err.lines().count(), 1, "single-line error expected");
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"alhpa": 1}"#).unwrap();
    // Inputs exist so the config error is what surfaces.
    run_pipeline_inputs(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "recon", "--method", "sense", "--y", "y.cvol", "--maps", "maps.cvol",
            "--mask", "mask.cvol", "--config", "bad.json", "--out", "r.cvol",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config:"));
}

#[test]
fn unknown_method_and_missing_net_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_inputs(dir.path());
    let out = run_in(
        dir.path(),
        &["recon", "--method", "modl", "--y", "y.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol", "--out", "r.cvol"],
    );
    assert_eq!(out.status.code(), Some(3));

    let out = run_in(
        dir.path(),
        &["recon", "--method", "darcs", "--y", "y.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol", "--out", "r.cvol"],
    );
    assert_eq!(out.status.code(), Some(3), "darcs without --net must fail");
}

#[test]
fn unreachable_mask_acceleration_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["mask", "--ny", "16", "--nz", "16", "--accel", "8", "--center", "16", "16", "--seed", "1", "--out", "m.cvol"],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: solver:"));
}

fn run_pipeline_inputs(dir: &Path) {
    ok_in(dir, &["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "1", "--out", "gt.cvol"]);
    ok_in(dir, &["coils", "--nx", "16", "--ny", "16", "--nz", "8", "--ncoils", "2", "--seed", "2", "--out", "maps.cvol"]);
    ok_in(dir, &["mask", "--ny", "16", "--nz", "8", "--accel", "2", "--center", "4", "2", "--seed", "3", "--out", "mask.cvol"]);
    ok_in(dir, &["simulate", "--gt", "gt.cvol", "--maps", "maps.cvol", "--mask", "mask.cvol", "--out", "y.cvol"]);
}

#[test]
fn eval_on_identical_volumes_reports_perfect_metrics() {
    let dir = tempfile::tempdir().unwrap();
    ok_in(dir.path(), &["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "9", "--out", "gt.cvol"]);
    let stdout = ok_in(dir.path(), &["eval", "--recon", "gt.cvol", "--gt", "gt.cvol"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["nmse"].as_f64().unwrap(), 0.0);
    assert!((doc["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(doc["psnr_db"].as_f64().unwrap(), 120.0);
    assert_eq!(doc["ssim_window"].as_u64().unwrap(), 7);
}

#[test]
fn mask_reports_effective_acceleration() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok_in(
        dir.path(),
        &["mask", "--ny", "128", "--nz", "96", "--accel", "8", "--center", "24", "24", "--seed", "7", "--out", "m.cvol"],
    );
    let line = stdout.lines().next().unwrap();
    let eff: f64 = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("effective_accel="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((eff - 8.0).abs() <= 0.4, "effective {eff}");
    let mask = darcs_core::io::read_mask(dir.path().join("m.cvol")).unwrap();
    assert_eq!((mask.ny(), mask.nz()), (128, 96));
}

#[test]
fn slice_writes_valid_pgm() {
    let dir = tempfile::tempdir().unwrap();
    ok_in(dir.path(), &["phantom", "--nx", "16", "--ny", "12", "--nz", "8", "--seed", "4", "--out", "gt.cvol"]);
    ok_in(dir.path(), &["slice", "--vol", "gt.cvol", "--axis", "z", "--index", "4", "--out", "s.pgm"]);
    let bytes = std::fs::read(dir.path().join("s.pgm")).unwrap();
    let header = b"P5\n16 12\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 16 * 12);
    // Window convention: the brightest voxel in the volume maps to 255, so a
    // slice through the peak must contain it.
    let gt = darcs_core::io::read_volume(dir.path().join("gt.cvol")).unwrap();
    let (mut px, mut py, mut pz, mut best) = (0usize, 0usize, 0usize, -1.0f64);
    let (nx, ny, nz) = gt.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let m = gt.at(x, y, z).norm();
                if m > best {
                    best = m;
                    (px, py, pz) = (x, y, z);
                }
            }
        }
    }
    ok_in(dir.path(), &["slice", "--vol", "gt.cvol", "--axis", "z", "--index", &pz.to_string(), "--out", "peak.pgm"]);
    let peak = std::fs::read(dir.path().join("peak.pgm")).unwrap();
    assert_eq!(peak[header.len() + py * nx + px], 255);

    // Out-of-range index is a usage error.
    let out = run_in(dir.path(), &["slice", "--vol", "gt.cvol", "--axis", "z", "--index", "99", "--out", "bad.pgm"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_volume_slice_is_black() {
    let dir = tempfile::tempdir().unwrap();
    let zero = darcs_core::ComplexVolume::zeros((8, 8, 8));
    darcs_core::io::write_volume(dir.path().join("z.cvol"), &zero).unwrap();
    ok_in(dir.path(), &["slice", "--vol", "z.cvol", "--axis", "x", "--index", "0", "--out", "z.pgm"]);
    let bytes = std::fs::read(dir.path().join("z.pgm")).unwrap();
    let header = b"P5\n8 8\n255\n";
    assert!(bytes[header.len()..].iter().all(|&b| b == 0));
}

#[test]
fn sparsity_subcommand_reports_fraction() {
    let dir = tempfile::tempdir().unwrap();
    ok_in(dir.path(), &["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "6", "--out", "gt.cvol"]);
    let stdout = ok_in(
        dir.path(),
        &["sparsity", "--vol", "gt.cvol", "--transform", "fd", "--out", "fd.cvol"],
    );
    let frac: f64 = stdout
        .trim()
        .strip_prefix("sparsity_fraction=")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&frac));
    let coeffs = darcs_core::io::read_coefficients(dir.path().join("fd.cvol")).unwrap();
    assert_eq!(coeffs.channels(), 3);
}

#[test]
fn provenance_records_are_written() {
    let dir = tempfile::tempdir().unwrap();
    ok_in(dir.path(), &["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "1", "--out", "gt.cvol"]);
    let prov: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("gt.cvol.prov.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(prov["tool"], "darcs");
    assert_eq!(prov["command"], "phantom");
    assert_eq!(prov["seeds"][0], 1);
}

#[test]
fn threads_env_cap_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .current_dir(dir.path())
        .env("DARCS_THREADS", "1")
        .args(["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "1", "--out", "gt.cvol"])
        .output()
        .unwrap();
    assert!(out.status.success());
    // Same artifact regardless of the thread cap.
    let single = std::fs::read(dir.path().join("gt.cvol")).unwrap();
    ok_in(dir.path(), &["phantom", "--nx", "16", "--ny", "16", "--nz", "8", "--seed", "1", "--out", "gt2.cvol"]);
    assert_eq!(single, std::fs::read(dir.path().join("gt2.cvol")).unwrap());
}
