//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;
use slicematch::bench::{self, BenchDims};
use slicematch::calibration::{calibrate_ground_resolution_within, LatLon};
use slicematch::error::{Error, Result};
use slicematch::evaluation::{pose_error, summarize};
use slicematch::geometry::{CameraModel, MaskSet, OrientationPrior, Pose};
use slicematch::learning::{train_toy, TrainConfig};
use slicematch::matching::location_heatmap;
use slicematch::pgm;
use slicematch::smtf::{read_feature_map, Tensor};

use crate::config::{read_json, write_model, GridConfig, MatchConfig};

#[derive(Parser, Debug)]
#[command(
    name = "slicematch",
    version,
    about = "Cross-view 3-DoF camera pose estimation"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Precompute slice masks for a candidate grid. Writes the distinct masks
    /// as a `[D, L, L]` tensor and a JSON index from `(pose, slice)` to the
    /// element offset of its mask.
    Masks {
        /// Match config supplying camera, grid, mask size and supersampling;
        /// the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        fov: Option<f64>,
        #[arg(long, required_unless_present = "config")]
        n_slices: Option<usize>,
        /// Aerial grid side `L`.
        #[arg(long, required_unless_present = "config")]
        size: Option<usize>,
        #[arg(long, required_unless_present = "config")]
        n_u: Option<usize>,
        #[arg(long, required_unless_present = "config")]
        n_v: Option<usize>,
        #[arg(long, required_unless_present = "config")]
        n_theta: Option<usize>,
        #[arg(long)]
        supersample: Option<usize>,
        /// Frustum radius in normalized aerial units.
        #[arg(long)]
        max_range: Option<f64>,
        /// Heading prior `center,half_width` in degrees.
        #[arg(long, value_parser = parse_prior, allow_hyphen_values = true)]
        prior: Option<OrientationPrior>,
        #[arg(long)]
        out: PathBuf,
        /// Index file; defaults to `out` with a `.json` extension.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Score every candidate pose and report the best one.
    Match {
        #[arg(long)]
        config: PathBuf,
        /// Raw ground feature map (SMTF, H x W x C_raw).
        #[arg(long)]
        ground: PathBuf,
        /// Raw aerial feature map (SMTF, L x L x C_raw).
        #[arg(long)]
        aerial: PathBuf,
        /// Prediction JSON; printed to stdout as well.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Location heatmap (PGM).
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Train the toy model on synthetic pairs.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        steps: Option<usize>,
        /// Receives `report.json` and the parameter tensors.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Error statistics of predictions against ground truth poses.
    Eval {
        /// JSON pose or array of poses (prediction records are accepted).
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Meters spanned by the aerial image side.
        #[arg(long)]
        extent: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0])]
        thresholds_m: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0])]
        thresholds_deg: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time aggregation plus scoring for several candidate counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [160, 1600, 16000])]
        k: Vec<usize>,
        /// Benchmark dimensions as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Meters per pixel from two overlapping geo-referenced aerial tiles.
    Calibrate {
        #[arg(long)]
        image_a: PathBuf,
        #[arg(long)]
        image_b: PathBuf,
        /// `lat,lon` in degrees.
        #[arg(long, value_parser = parse_latlon, allow_hyphen_values = true)]
        center_a: LatLon,
        #[arg(long, value_parser = parse_latlon, allow_hyphen_values = true)]
        center_b: LatLon,
        #[arg(long)]
        max_offset: Option<usize>,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated numbers, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_prior(s: &str) -> std::result::Result<OrientationPrior, String> {
    let (center_deg, half_width_deg) = parse_pair(s)?;
    Ok(OrientationPrior {
        center_deg,
        half_width_deg,
    })
}

fn parse_latlon(s: &str) -> std::result::Result<LatLon, String> {
    let (lat_deg, lon_deg) = parse_pair(s)?;
    Ok(LatLon { lat_deg, lon_deg })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(path) = out {
        std::fs::write(path, format!("{json}\n"))?;
    }
    print_line(&json)
}

/// Prints to stdout; a closed pipe is not an error.
fn print_line(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Masks {
            config,
            fov,
            n_slices,
            size,
            n_u,
            n_v,
            n_theta,
            supersample,
            max_range,
            prior,
            out,
            index,
        } => {
            let mut spec = match config {
                Some(p) => {
                    let (cfg, _) = MatchConfig::load(&p)?;
                    MaskSpec {
                        camera: cfg.camera,
                        grid: cfg.grid,
                        size: cfg.mask_size,
                        supersample: cfg.supersample,
                    }
                }
                None => MaskSpec {
                    camera: CameraModel {
                        fov_deg: 360.0,
                        n_slices: 0,
                        max_range: None,
                    },
                    grid: GridConfig {
                        n_u: 0,
                        n_v: 0,
                        n_theta: 0,
                        prior: None,
                    },
                    size: 0,
                    supersample: 8,
                },
            };
            let set = |dst: &mut usize, v: Option<usize>| *dst = v.unwrap_or(*dst);
            set(&mut spec.camera.n_slices, n_slices);
            set(&mut spec.size, size);
            set(&mut spec.grid.n_u, n_u);
            set(&mut spec.grid.n_v, n_v);
            set(&mut spec.grid.n_theta, n_theta);
            set(&mut spec.supersample, supersample);
            spec.camera.fov_deg = fov.unwrap_or(spec.camera.fov_deg);
            spec.camera.max_range = max_range.or(spec.camera.max_range);
            spec.grid.prior = prior.or(spec.grid.prior);
            let index = index.unwrap_or_else(|| out.with_extension("json"));
            masks(&spec, &out, &index)
        }
        Command::Match {
            config,
            ground,
            aerial,
            out,
            heatmap,
        } => match_cmd(
            &config,
            &ground,
            &aerial,
            out.as_deref(),
            heatmap.as_deref(),
        ),
        Command::Train {
            config,
            seed,
            steps,
            out_dir,
        } => train(config.as_deref(), seed, steps, &out_dir),
        Command::Eval {
            predictions,
            ground_truth,
            extent,
            thresholds_m,
            thresholds_deg,
            out,
        } => eval(
            &predictions,
            &ground_truth,
            extent,
            &thresholds_m,
            &thresholds_deg,
            out.as_deref(),
        ),
        Command::Bench {
            k,
            config,
            threads,
            seed,
            out,
        } => bench_cmd(&k, config.as_deref(), threads, seed, out.as_deref()),
        Command::Calibrate {
            image_a,
            image_b,
            center_a,
            center_b,
            max_offset,
        } => {
            let a = pgm::decode(&std::fs::read(&image_a)?)?;
            let b = pgm::decode(&std::fs::read(&image_b)?)?;
            let r = calibrate_ground_resolution_within(&a, &b, center_a, center_b, max_offset)?;
            emit(&r, None)
        }
    }
}

struct MaskSpec {
    camera: CameraModel,
    grid: GridConfig,
    size: usize,
    supersample: usize,
}

#[derive(Serialize)]
struct MaskIndex<'a> {
    tensor: String,
    mask_size: usize,
    n_slices: usize,
    n_distinct: usize,
    camera: &'a CameraModel,
    poses: &'a [Pose],
    /// `offsets[k][n]`: element offset of mask `(k, n)` in the tensor payload.
    offsets: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct MaskSummary {
    poses: usize,
    slices: usize,
    size: usize,
    distinct_masks: usize,
    bytes: u64,
    index: PathBuf,
}

fn masks(spec: &MaskSpec, out: &Path, index: &Path) -> Result<()> {
    let camera = CameraModel::new(
        spec.camera.fov_deg,
        spec.camera.n_slices,
        spec.camera.max_range,
    )?;
    let poses = spec.grid.poses()?;
    let set = MaskSet::precompute(camera, &poses, spec.size, spec.supersample)?;
    let n = camera.n_slices;
    let cells = spec.size * spec.size;
    let data: Vec<f32> = set.distinct_masks().flatten().copied().collect();
    Tensor::new(vec![set.n_distinct(), spec.size, spec.size], data)?.write(out)?;
    let offsets = (0..poses.len())
        .map(|k| {
            (0..n)
                .map(|s| Ok(set.storage_id(k, s)? * cells))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let idx = MaskIndex {
        tensor: out
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        mask_size: spec.size,
        n_slices: n,
        n_distinct: set.n_distinct(),
        camera: &camera,
        poses: poses.poses(),
        offsets,
    };
    let json = serde_json::to_string(&idx).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(index, format!("{json}\n"))?;
    emit(
        &MaskSummary {
            poses: poses.len(),
            slices: n,
            size: spec.size,
            distinct_masks: set.n_distinct(),
            bytes: set.bytes(),
            index: index.to_path_buf(),
        },
        None,
    )
}

fn match_cmd(
    config: &Path,
    ground: &Path,
    aerial: &Path,
    out: Option<&Path>,
    heatmap: Option<&Path>,
) -> Result<()> {
    let (cfg, base) = MatchConfig::load(config)?;
    let model = cfg.model(&base)?;
    let poses = cfg.grid.poses()?;
    let masks = MaskSet::precompute(cfg.camera, &poses, cfg.mask_size, cfg.supersample)?;
    let g = read_feature_map(ground)?;
    let a = read_feature_map(aerial)?;
    let (scores, _) = model.score(&g, &a, &poses, &masks)?;
    if let Some(path) = heatmap {
        std::fs::write(path, location_heatmap(&scores)?.to_pgm())?;
    }
    emit(&scores.record(), out)
}

fn train(config: Option<&Path>, seed: u64, steps: Option<usize>, out_dir: &Path) -> Result<()> {
    let mut cfg: TrainConfig = match config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    let result = train_toy(&cfg)?;
    write_model(&result.model, out_dir)?;
    let report = result.report(&cfg);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), format!("{json}\n"))?;
    print_line(
        &serde_json::json!({
            "seed": report.seed,
            "steps": report.steps,
            "initial_eval_loss": report.initial_eval_loss,
            "final_eval_loss": report.final_eval_loss,
            "initial_accuracy": report.initial_accuracy,
            "final_accuracy": report.final_accuracy,
        })
        .to_string(),
    )
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<Pose>),
    One(Pose),
}

fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let raw = match read_json::<OneOrMany>(path)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(p) => vec![p],
    };
    raw.into_iter()
        .map(|p| Pose::new(p.u, p.v, p.theta_deg))
        .collect()
}

fn eval(
    predictions: &Path,
    ground_truth: &Path,
    extent: f64,
    thresholds_m: &[f64],
    thresholds_deg: &[f64],
    out: Option<&Path>,
) -> Result<()> {
    let pred = read_poses(predictions)?;
    let gt = read_poses(ground_truth)?;
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let errors = pred
        .iter()
        .zip(&gt)
        .map(|(p, g)| pose_error(p, g, extent))
        .collect::<Result<Vec<_>>>()?;
    emit(&summarize(&errors, thresholds_m, thresholds_deg)?, out)
}

fn bench_cmd(
    k: &[usize],
    config: Option<&Path>,
    threads: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut dims: BenchDims = match config {
        Some(p) => read_json(p)?,
        None => BenchDims::default(),
    };
    if let Some(t) = threads {
        dims.threads = t;
    }
    if let Some(s) = seed {
        dims.seed = s;
    }
    emit(&bench::run(&dims, k)?, out)
}
