//! Batch pipeline driver: mask, phantom, coils, simulate, recon, eval,
//! slice, and sparsity subcommands with reproducible outputs.
//!
//! Every run writes a provenance record (`<out>.prov.json`) beside its
//! primary output: tool version, argv, config hash, and seeds. Errors exit
//! with a single machine-parsable line on stderr; exit codes are 2 for
//! missing files / I/O, 3 for invalid configs or formats, 4 for solver
//! failures.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use config::{Method, ReconConfigFile};
use darcs_core::forward::ForwardModel;
use darcs_core::net::{load_weights, Network};
use darcs_core::sampling::{generate_poisson_mask, MaskConfig};
use darcs_core::solvers::{
    admm_darcs, recon_aics, recon_cs, recon_dagan_direct, recon_pnp, recon_sense,
    recon_zero_filled, sparsity_map, write_trace_csv_path, AdmmRun, CsSparsifier,
};
use darcs_core::synth::{make_coil_maps, make_phantom, simulate_kspace};
use darcs_core::transforms::{
    sparsity_fraction, FiniteDifference, HaarDwt, LearnedResidual, SparsifyingTransform,
};
use darcs_core::volume::norm2;
use darcs_core::{io as cvol, ComplexVolume, Error, Result};

#[derive(Parser)]
#[command(name = "darcs", version, about = "Undersampled multi-coil 3D MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Poisson-disc undersampling mask.
    Mask {
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        nz: usize,
        /// Target acceleration factor R.
        #[arg(long)]
        accel: f64,
        /// Fully sampled center block (cy cz).
        #[arg(long, num_args = 2, value_names = ["CY", "CZ"], default_values_t = [24, 24])]
        center: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic ground-truth phantom volume.
    Phantom {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        nz: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic coil sensitivity maps.
    Coils {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        nz: usize,
        #[arg(long)]
        ncoils: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate undersampled noisy k-space from a ground-truth volume.
    Simulate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Noise level l: ||noise|| = l * ||clean k-space||.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a volume from undersampled k-space.
    Recon {
        #[arg(long)]
        method: String,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// JSON config file (schedule, iteration counts, net paths).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network weight file(s); repeat for stage-adaptive schedules.
        #[arg(long)]
        net: Vec<PathBuf>,
        /// Reference volume: enables the NMSE column in the trace.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Wavelet decomposition levels for cs-haar.
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for per-iteration z states (ADMM methods only).
        #[arg(long)]
        save_states: Option<PathBuf>,
    },
    /// Evaluate a reconstruction against ground truth.
    Eval {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the metrics JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a magnitude slice as an 8-bit PGM image.
    Slice {
        #[arg(long)]
        vol: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a sparsifying transform and report the sparsity fraction.
    Sparsity {
        #[arg(long)]
        vol: PathBuf,
        #[arg(long)]
        transform: TransformKind,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long)]
        net: Option<PathBuf>,
        /// Relative magnitude threshold for the sparsity fraction.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Write the coefficient map as a CVOL file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformKind {
    Fd,
    Haar,
    Net,
}

#[derive(serde::Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: String,
    argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    seeds: Vec<u64>,
}

fn write_provenance(
    out: &Path,
    command: &str,
    config_sha256: Option<String>,
    seeds: Vec<u64>,
) -> Result<()> {
    let prov = Provenance {
        tool: "darcs",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        argv: std::env::args().collect(),
        config_sha256,
        seeds,
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".prov.json");
    let text = serde_json::to_string_pretty(&prov)
        .map_err(|e| Error::Format(format!("provenance: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DARCS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match &e {
                Error::Io(_) => ("io", 2),
                Error::Format(_) | Error::Validation(_) | Error::InvalidArgument(_)
                | Error::ShapeMismatch(_) => ("config", 3),
                Error::NonFinite(_) | Error::MaskAcceleration { .. } => ("solver", 4),
            };
            eprintln!("error: {kind}: {e}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask {
            ny,
            nz,
            accel,
            center,
            tolerance,
            seed,
            out,
        } => {
            let cfg = MaskConfig {
                ny,
                nz,
                accel,
                center: (center[0], center[1]),
                seed,
                tolerance,
            };
            let generated = generate_poisson_mask(&cfg)?;
            cvol::write_mask(&out, &generated.mask)?;
            write_provenance(&out, "mask", None, vec![seed])?;
            println!(
                "effective_accel={} min_distance={} samples={}",
                generated.effective_accel,
                generated.min_distance,
                generated.mask.count_sampled()
            );
            Ok(())
        }
        Command::Phantom { nx, ny, nz, seed, out } => {
            let vol = make_phantom((nx, ny, nz), seed);
            cvol::write_volume(&out, &vol)?;
            write_provenance(&out, "phantom", None, vec![seed])?;
            println!("dims={nx}x{ny}x{nz} max_abs={}", vol.max_abs());
            Ok(())
        }
        Command::Coils {
            nx,
            ny,
            nz,
            ncoils,
            seed,
            out,
        } => {
            let maps = make_coil_maps((nx, ny, nz), ncoils, seed)?;
            cvol::write_coil_maps(&out, &maps)?;
            write_provenance(&out, "coils", None, vec![seed])?;
            println!("ncoils={ncoils} dims={nx}x{ny}x{nz}");
            Ok(())
        }
        Command::Simulate {
            gt,
            maps,
            mask,
            noise,
            seed,
            out,
        } => {
            let gt_vol = cvol::read_volume(&gt)?;
            let model = ForwardModel::new(cvol::read_coil_maps(&maps)?, cvol::read_mask(&mask)?)?;
            let y = simulate_kspace(&gt_vol, &model, noise, seed)?;
            cvol::write_kspace(&out, &y)?;
            write_provenance(&out, "simulate", None, vec![seed])?;
            println!("ncoils={} noise={noise} norm={}", y.ncoils(), norm2(&y));
            Ok(())
        }
        Command::Recon {
            method,
            y,
            maps,
            mask,
            config,
            net,
            gt,
            levels,
            out,
            trace,
            save_states,
        } => {
            let method = Method::parse(&method)?;
            let cfg = match &config {
                Some(path) => {
                    let c = ReconConfigFile::load(&path.display().to_string())?;
                    if let Some(m) = c.method {
                        if m != method {
                            return Err(Error::InvalidArgument(format!(
                                "config method '{}' disagrees with --method '{}'",
                                m.as_str(),
                                method.as_str()
                            )));
                        }
                    }
                    c
                }
                None => ReconConfigFile::default(),
            };
            let config_hash = match &config {
                Some(path) => Some(sha256_file(path)?),
                None => None,
            };

            let net_paths: Vec<PathBuf> = if cfg.net_paths.is_empty() {
                net.clone()
            } else {
                cfg.net_paths.iter().map(PathBuf::from).collect()
            };
            if method.needs_net() && net_paths.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "method '{}' requires at least one --net (or config net_paths)",
                    method.as_str()
                )));
            }
            let nets: Vec<Network> = net_paths
                .iter()
                .map(|p| load_weights(p))
                .collect::<Result<_>>()?;

            let y_data = cvol::read_kspace(&y)?;
            let model = ForwardModel::new(cvol::read_coil_maps(&maps)?, cvol::read_mask(&mask)?)?;
            let gt_vol = match &gt {
                Some(p) => Some(cvol::read_volume(p)?),
                None => None,
            };

            let sched = cfg.schedule(nets.len());
            let record_states = save_states.is_some();
            let stage0 = sched.stages[0].clone();

            enum Outcome {
                Volume(ComplexVolume),
                Run(AdmmRun),
            }
            let outcome = match method {
                Method::Zf => Outcome::Volume(recon_zero_filled(&y_data, &model)?),
                Method::Sense => Outcome::Volume(recon_sense(
                    &y_data,
                    &model,
                    sched.cg_tol,
                    sched.cg_maxiter,
                )?),
                Method::CsHaar => Outcome::Run(recon_cs(
                    &y_data,
                    &model,
                    CsSparsifier::Haar { levels },
                    stage0.alpha,
                    stage0.mu,
                    sched.t_total,
                )?),
                Method::CsFd => Outcome::Run(recon_cs(
                    &y_data,
                    &model,
                    CsSparsifier::FiniteDifference {
                        k_steps: stage0.k_steps,
                        beta: stage0.beta,
                    },
                    stage0.alpha,
                    stage0.mu,
                    sched.t_total,
                )?),
                Method::Pnp => Outcome::Run(recon_pnp(
                    &y_data,
                    &model,
                    &nets[0],
                    stage0.mu,
                    sched.t_total,
                )?),
                Method::Dagan => Outcome::Volume(recon_dagan_direct(&y_data, &model, &nets[0])?),
                Method::Aics => Outcome::Run(recon_aics(
                    &y_data,
                    &model,
                    &nets[0],
                    stage0.alpha,
                    stage0.mu,
                    sched.t_total,
                )?),
                Method::Darcs => {
                    let transforms: Vec<LearnedResidual> =
                        nets.iter().cloned().map(LearnedResidual::new).collect();
                    let refs: Vec<&dyn SparsifyingTransform> = transforms
                        .iter()
                        .map(|t| t as &dyn SparsifyingTransform)
                        .collect();
                    Outcome::Run(admm_darcs(
                        &y_data,
                        &model,
                        &sched,
                        &refs,
                        gt_vol.as_ref(),
                        record_states,
                    )?)
                }
            };

            let recon = match &outcome {
                Outcome::Volume(v) => v,
                Outcome::Run(r) => &r.recon,
            };
            cvol::write_volume(&out, recon)?;
            if let Some(trace_path) = &trace {
                let rows = match &outcome {
                    Outcome::Run(r) => r.trace.clone(),
                    Outcome::Volume(_) => Vec::new(),
                };
                write_trace_csv_path(trace_path, &rows)?;
            }
            if let (Some(dir), Outcome::Run(r)) = (&save_states, &outcome) {
                if let Some(states) = &r.states {
                    std::fs::create_dir_all(dir)?;
                    for (i, state) in states.iter().enumerate() {
                        cvol::write_volume(dir.join(format!("state_{:03}.cvol", i + 1)), state)?;
                    }
                }
            }
            write_provenance(&out, "recon", config_hash, vec![])?;
            if let Some(g) = &gt_vol {
                println!(
                    "method={} nmse={}",
                    method.as_str(),
                    darcs_core::metrics::nmse(recon, g)?
                );
            } else {
                println!("method={}", method.as_str());
            }
            Ok(())
        }
        Command::Eval { recon, gt, out } => {
            let r = cvol::read_volume(&recon)?;
            let g = cvol::read_volume(&gt)?;
            let doc = serde_json::json!({
                "psnr_db": darcs_core::metrics::psnr(&r, &g)?,
                "ssim": darcs_core::metrics::ssim3d(&r, &g)?,
                "nmse": darcs_core::metrics::nmse(&r, &g)?,
                "ssim_window": darcs_core::metrics::SSIM_WINDOW,
                "psnr_cap_db": darcs_core::metrics::PSNR_CAP_DB,
            });
            let text = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::Format(format!("metrics json: {e}")))?;
            println!("{text}");
            if let Some(path) = &out {
                std::fs::write(path, &text)?;
                write_provenance(path, "eval", None, vec![])?;
            }
            Ok(())
        }
        Command::Slice {
            vol,
            axis,
            index,
            out,
        } => {
            let v = cvol::read_volume(&vol)?;
            let pgm = render_slice(&v, axis, index)?;
            std::fs::write(&out, pgm)?;
            write_provenance(&out, "slice", None, vec![])?;
            Ok(())
        }
        Command::Sparsity {
            vol,
            transform,
            levels,
            net,
            threshold,
            out,
        } => {
            let v = cvol::read_volume(&vol)?;
            let coeffs = match transform {
                TransformKind::Fd => sparsity_map(&v, &FiniteDifference)?,
                TransformKind::Haar => sparsity_map(&v, &HaarDwt { levels })?,
                TransformKind::Net => {
                    let path = net.ok_or_else(|| {
                        Error::InvalidArgument("--transform net requires --net".into())
                    })?;
                    let lr = LearnedResidual::new(load_weights(path)?);
                    sparsity_map(&v, &lr)?
                }
            };
            let fraction = sparsity_fraction(&coeffs, threshold);
            if let Some(path) = &out {
                cvol::write_coefficients(path, &coeffs)?;
                write_provenance(path, "sparsity", None, vec![])?;
            }
            println!("sparsity_fraction={fraction}");
            Ok(())
        }
    }
}

/// Magnitude slice rendered as binary PGM (P5), linearly windowed to
/// [0, max|vol|] over the whole volume.
fn render_slice(vol: &ComplexVolume, axis: Axis, index: usize) -> Result<Vec<u8>> {
    let (nx, ny, nz) = vol.dims();
    let (limit, width, height) = match axis {
        Axis::X => (nx, ny, nz),
        Axis::Y => (ny, nx, nz),
        Axis::Z => (nz, nx, ny),
    };
    if index >= limit {
        return Err(Error::InvalidArgument(format!(
            "slice index {index} out of range (axis size {limit})"
        )));
    }
    let max = vol.max_abs();
    let mut pgm = format!("P5\n{width} {height}\n255\n").into_bytes();
    for row in 0..height {
        for col in 0..width {
            let v = match axis {
                Axis::X => vol.at(index, col, row),
                Axis::Y => vol.at(col, index, row),
                Axis::Z => vol.at(col, row, index),
            };
            let g = if max == 0.0 {
                0.0
            } else {
                (v.norm() / max * 255.0).round()
            };
            pgm.push(g.clamp(0.0, 255.0) as u8);
        }
    }
    Ok(pgm)
}
