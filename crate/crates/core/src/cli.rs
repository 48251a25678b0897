//! Command-line workflow: generate, analyze-subspace, train, evaluate,
//! ablate, baselines, report.
//!
//! Every run writes a resolved-config snapshot (`config.json`) with schema
//! versions and a content hash of its inputs next to its outputs. Progress
//! goes to stderr; machine-readable results go to files only.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{table2_rows, AlsConfig};
use crate::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::detector::Detector;
use crate::error::{CoreError, Result};
use crate::eval::{
    curve_threshold_grid, evaluate_detector, report_tables, AblationRow, BaselineRow, CurvePoint,
};
use crate::optim::ParamSet;
use crate::predictor::Predictor;
use crate::subspace::{compare_2d_3d, default_primary_configs, fit_basis, stack_blocks_3d, BasisMode};
use crate::synthdata::{generate_dataset, load_dataset, Dataset, GenerateConfig, Split, DATASET_SCHEMA_VERSION};
use crate::trainer::{run_ablation, train, TrainConfig, TrainMode};
use crate::util::{format_float, hash_bytes, write_csv};

/// Environment variable holding the default output root.
pub const OUT_ROOT_ENV: &str = "LANDMARKER_OUT";

#[derive(Debug, Parser)]
#[command(name = "landmarker", version, about = "Self-supervised secondary-landmark learning")]
pub struct Cli {
    /// Worker threads for batch parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multiview capture dataset.
    Generate(GenerateArgs),
    /// Fit the joint pose space and compare 2-D vs 3-D reconstruction.
    AnalyzeSubspace(AnalyzeArgs),
    /// Train the detector and predictor under one mode.
    Train(TrainArgs),
    /// Score a trained run on a dataset split.
    Evaluate(EvaluateArgs),
    /// Run the mode x label-ratio ablation grid.
    Ablate(AblateArgs),
    /// Run the ALS / BALS / VAE comparison baselines.
    Baselines(BaselinesArgs),
    /// Merge run artifacts into the results-table CSV bundle.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub cameras: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub label_ratio: f64,
    #[arg(long, default_value_t = 0.15)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    /// Focal length in pixels; scales with the image size when omitted.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Camera arc in degrees (full ring when omitted).
    #[arg(long)]
    pub arc_degrees: Option<f64>,
    /// Skip image files (pose-only dataset for subspace studies).
    #[arg(long)]
    pub no_images: bool,
    /// Gaussian pixel noise for the observed 2-D channel.
    #[arg(long, default_value_t = 0.0)]
    pub pixel_noise: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Basis count; defaults to the smallest count explaining 95% variance.
    #[arg(long)]
    pub b: Option<usize>,
    /// Comma-separated modes to report.
    #[arg(long, default_value = "2d,3d")]
    pub modes: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOverrides {
    #[arg(long, default_value = "l+ug+uc")]
    pub mode: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_rate: Option<f64>,
    #[arg(long)]
    pub decay_steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub phase1_steps: Option<usize>,
    #[arg(long)]
    pub phase2_steps: Option<usize>,
    #[arg(long)]
    pub predictor_steps: Option<usize>,
    #[arg(long)]
    pub label_ratio: Option<f64>,
    /// Detach primary detections from the unlabeled loss.
    #[arg(long)]
    pub stop_gradient: bool,
    /// Weight of the contrastive terms relative to the reprojection term.
    #[arg(long)]
    pub contrastive_weight: Option<f64>,
    /// Training profile: "paper" keeps the reference recipe
    /// (batch 10, lr 1e-4, decay 0.8/2000); "desk" is tuned for the
    /// desk-scale synthetic datasets.
    #[arg(long, default_value = "desk")]
    pub profile: String,
}

impl TrainOverrides {
    pub fn resolve(&self, dataset: &Dataset) -> Result<TrainConfig> {
        let mut config = match self.profile.as_str() {
            "paper" => TrainConfig::default(),
            "desk" => desk_profile(),
            other => {
                return Err(CoreError::InvalidConfig {
                    reason: format!("unknown profile {other:?} (expected paper|desk)"),
                })
            }
        };
        config.mode = TrainMode::parse(&self.mode)?;
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.lr {
            config.learning_rate = v;
        }
        if let Some(v) = self.decay_rate {
            config.decay_rate = v;
        }
        if let Some(v) = self.decay_steps {
            config.decay_steps = v;
        }
        if let Some(v) = self.lambda {
            config.lambda_l = v;
        }
        if let Some(v) = self.phase1_steps {
            config.phase1_steps = v;
        }
        if let Some(v) = self.phase2_steps {
            config.phase2_steps = v;
        }
        if let Some(v) = self.predictor_steps {
            config.predictor_steps = v;
        }
        config.label_ratio = self.label_ratio;
        config.stop_gradient_primary = self.stop_gradient;
        if let Some(w) = self.contrastive_weight {
            config.weights.self_correlation = w;
            config.weights.cross_correlation = w;
        }
        Ok(config.for_dataset(dataset))
    }
}

/// Training profile calibrated for the desk-scale synthetic captures: the
/// tiny networks converge at far higher learning rates than the reference
/// recipe assumes.
pub fn desk_profile() -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        decay_rate: 0.85,
        decay_steps: 400,
        phase1_steps: 900,
        phase2_steps: 1200,
        predictor_steps: 3000,
        predictor_lr: 3e-3,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run directory holding detector.ckpt.json / predictor.ckpt.json.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frames sampled for the correlation statistics (0 disables).
    #[arg(long, default_value_t = 60)]
    pub correlation_frames: usize,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// "all" or a comma-separated subset of l,l+ut,l+ug,l+ug+uc.
    #[arg(long, default_value = "all")]
    pub modes: String,
    /// Comma-separated label ratios (the 2k..14k / 140k ladder analog).
    #[arg(long, default_value = "0.014,0.043,0.071,0.1")]
    pub ratios: String,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional run directory; adds the detected-primary query variant.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Comma-separated run directories to merge.
    #[arg(long)]
    pub runs: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &CoreError) -> i32 {
    match err {
        CoreError::InvalidConfig { .. } | CoreError::SchemaVersion { .. } => 2,
        CoreError::Dataset { .. }
        | CoreError::Io(_)
        | CoreError::Serde(_)
        | CoreError::EmptyInput { .. }
        | CoreError::InsufficientSamples { .. }
        | CoreError::LandmarkCountMismatch { .. }
        | CoreError::InvalidSkeleton { .. }
        | CoreError::InvalidCamera { .. }
        | CoreError::Checkpoint { .. } => 3,
        _ => 4,
    }
}

fn resolve_out(cli_out: &Option<PathBuf>, command: &str) -> Result<PathBuf> {
    if let Some(out) = cli_out {
        return Ok(out.clone());
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => Ok(PathBuf::from(root).join(command)),
        None => Err(CoreError::InvalidConfig {
            reason: format!("--out not given and {OUT_ROOT_ENV} is unset"),
        }),
    }
}

#[derive(Serialize)]
struct Snapshot<'a> {
    command: &'a str,
    resolved: serde_json::Value,
    dataset_schema_version: u32,
    checkpoint_schema_version: u32,
    /// Content hash of the inputs this run consumed.
    input_hash: String,
}

fn write_snapshot(
    out_dir: &Path,
    command: &str,
    resolved: serde_json::Value,
    input_hash: String,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let snap = Snapshot {
        command,
        resolved,
        dataset_schema_version: DATASET_SCHEMA_VERSION,
        checkpoint_schema_version: CHECKPOINT_VERSION,
        input_hash,
    };
    std::fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(&snap)?)?;
    Ok(())
}

fn load_run_models(run: &Path, dataset: &Dataset) -> Result<(Detector, Predictor)> {
    let det_ckpt = Checkpoint::load(&run.join("detector.ckpt.json"))?;
    let pred_ckpt = Checkpoint::load(&run.join("predictor.ckpt.json"))?;
    // reconstruct configs from the dataset geometry and checkpoint shapes
    let mut config = TrainConfig::default().for_dataset(dataset);
    let feat = det_ckpt.get("detector/feat/weight")?;
    config.detector.feature_dim = feat.shape()[0];
    for (i, ch) in config.detector.stage_channels.iter_mut().enumerate() {
        *ch = det_ckpt.get(&format!("detector/stage{i}/weight"))?.shape()[0];
    }
    config.predictor.hidden = pred_ckpt.get("predictor/layer0/weight")?.shape()[0];
    let detector = Detector {
        config: config.detector.clone(),
        params: ParamSet::from_checkpoint(&det_ckpt)?,
    };
    let predictor = Predictor {
        config: config.predictor.clone(),
        params: ParamSet::from_checkpoint(&pred_ckpt)?,
    };
    Ok((detector, predictor))
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // ignore the error when a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::AnalyzeSubspace(args) => cmd_analyze(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Baselines(args) => cmd_baselines(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let out = resolve_out(&args.out, "generate")?;
    let mut config = GenerateConfig {
        frames: args.frames,
        cameras: args.cameras,
        seed: args.seed,
        label_ratio: args.label_ratio,
        test_fraction: args.test_fraction,
        rig_arc_degrees: args.arc_degrees,
        write_images: !args.no_images,
        ..GenerateConfig::default().with_image_size(args.image_size)
    };
    if let Some(f) = args.focal {
        config.focal = f;
    }
    config.noise.pixel_noise_px = args.pixel_noise;
    eprintln!("generating {} frames x {} cameras -> {}", config.frames, config.cameras, out.display());
    let manifest = generate_dataset(&config, &out)?;
    write_snapshot(
        &out,
        "generate",
        serde_json::to_value(&config)?,
        manifest.content_hash.clone(),
    )?;
    eprintln!(
        "done: {} labeled-secondary / {} labeled-primary / {} unlabeled / {} test",
        manifest.splits.labeled_secondary,
        manifest.splits.labeled_primary,
        manifest.splits.unlabeled,
        manifest.splits.test
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let out = resolve_out(&args.out, "analyze-subspace")?;
    let dataset = load_dataset(&args.dataset)?;
    let modes: Vec<&str> = args.modes.split(',').map(str::trim).collect();
    for m in &modes {
        if !["2d", "3d"].contains(m) {
            return Err(CoreError::InvalidConfig { reason: format!("unknown mode {m:?}") });
        }
    }
    let configs = default_primary_configs(&dataset.skeleton);

    let b = match args.b {
        Some(b) => b,
        None => {
            // 95%-variance rule on the canonical 3-D joint space
            let vectors: Vec<_> = dataset
                .frames_in_split(Split::LabeledFull)
                .filter_map(|f| {
                    let pose = f.pose3d()?;
                    let (canon, _) =
                        crate::geometry::normalize_pose(&pose, dataset.skeleton.frame_triple).ok()?;
                    Some(stack_blocks_3d(&canon.primary, &canon.secondary))
                })
                .collect();
            let p = dataset.skeleton.num_primary();
            let s = dataset.skeleton.num_secondary();
            let max_b = vectors.len().saturating_sub(1).min(3 * (p + s));
            let probe = fit_basis(&vectors, p, s, BasisMode::ThreeD, max_b)?;
            probe.count_for_variance(0.95).max(1)
        }
    };
    eprintln!("comparing joint spaces with B = {b} over {} configurations", configs.len());
    let report = compare_2d_3d(&dataset, &configs, b)?;

    let detail: Vec<Vec<String>> = report
        .rows
        .iter()
        .filter(|r| modes.contains(&r.mode.as_str()))
        .map(|r| {
            vec![
                r.config.clone(),
                r.mode.clone(),
                r.landmark.clone(),
                r.units.clone(),
                format_float(r.mean_error),
                format_float(r.median_error),
                r.samples.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("subspace_detail.csv"),
        &["config", "mode", "landmark", "units", "mean_error", "median_error", "samples"],
        &detail,
    )?;
    let summary: Vec<Vec<String>> = report
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.config.clone(),
                format_float(s.mean_px_2d),
                format_float(s.mean_px_3d),
                format_float(s.ratio_3d_over_2d),
            ]
        })
        .collect();
    write_csv(
        &out.join("subspace_summary.csv"),
        &["config", "mean_px_2d", "mean_px_3d", "ratio_3d_over_2d"],
        &summary,
    )?;
    write_snapshot(
        &out,
        "analyze-subspace",
        serde_json::json!({"dataset": args.dataset, "b": b, "modes": modes}),
        dataset.manifest.content_hash.clone(),
    )?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let out = resolve_out(&args.out, "train")?;
    let dataset = load_dataset(&args.dataset)?;
    let config = args.overrides.resolve(&dataset)?;
    eprintln!(
        "training mode {} (phase1 {} + phase2 {} steps) -> {}",
        config.mode.label(),
        config.phase1_steps,
        config.phase2_steps,
        out.display()
    );
    let outcome = train(&config, &dataset, Some(&out))?;
    if let Some(reason) = &outcome.aborted {
        eprintln!("training aborted: {reason}; last-good checkpoint written");
        return Err(CoreError::TrainingAborted { step: outcome.log.len(), reason: reason.clone() });
    }
    write_snapshot(
        &out,
        "train",
        serde_json::to_value(&config)?,
        dataset.manifest.content_hash.clone(),
    )?;
    eprintln!("done ({} skipped pairs)", outcome.skipped_pairs);
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let out = resolve_out(&args.out, "evaluate")?;
    let dataset = load_dataset(&args.dataset)?;
    let (detector, predictor) = load_run_models(&args.run, &dataset)?;

    let grid = curve_threshold_grid();
    let result = evaluate_detector(&dataset, &detector, Split::Test, &grid)?;
    let mut rows = Vec::new();
    for (ti, &t) in result.thresholds.iter().enumerate() {
        for (k, name) in result.landmark_names.iter().enumerate() {
            rows.push(vec![
                name.clone(),
                format_float(t),
                format_float(result.rates[ti][k]),
                result.counts[k].to_string(),
            ]);
        }
    }
    write_csv(&out.join("pckh.csv"), &["landmark", "threshold", "rate", "samples"], &rows)?;

    let curve: Vec<Vec<String>> = result
        .thresholds
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            vec![
                "run".to_string(),
                format_float(t),
                format_float(result.mean_secondary(ti)),
                format_float(result.mean_primary(ti)),
            ]
        })
        .collect();
    write_csv(
        &out.join("pckh_curve.csv"),
        &["method", "threshold", "mean_secondary", "mean_primary"],
        &curve,
    )?;

    if args.correlation_frames > 0 {
        let stats = crate::eval::correlation_stats(
            &dataset,
            &detector,
            &predictor,
            args.correlation_frames,
            args.seed,
        )?;
        let mut rows: Vec<Vec<String>> = stats
            .self_values
            .iter()
            .map(|v| vec!["self".to_string(), format_float(*v)])
            .collect();
        rows.extend(stats.cross_values.iter().map(|v| vec!["cross".to_string(), format_float(*v)]));
        write_csv(&out.join("correlations.csv"), &["kind", "value"], &rows)?;
        eprintln!(
            "correlation gap: self {} - cross {} = {}",
            stats.mean_self,
            stats.mean_cross,
            stats.gap()
        );
    }

    let input_hash = hash_bytes(
        format!("{}{}", dataset.manifest.content_hash, args.run.display()).as_bytes(),
    );
    write_snapshot(
        &out,
        "evaluate",
        serde_json::json!({"dataset": args.dataset, "run": args.run}),
        input_hash,
    )?;
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let out = resolve_out(&args.out, "ablate")?;
    let dataset = load_dataset(&args.dataset)?;
    let modes: Vec<TrainMode> = if args.modes == "all" {
        TrainMode::all().to_vec()
    } else {
        args.modes
            .split(',')
            .map(|m| TrainMode::parse(m.trim()))
            .collect::<Result<Vec<_>>>()?
    };
    let ratios: Vec<f64> = args
        .ratios
        .split(',')
        .map(|r| {
            r.trim().parse::<f64>().map_err(|e| CoreError::InvalidConfig {
                reason: format!("bad ratio {r:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let base = args.overrides.resolve(&dataset)?;
    let mut grid = Vec::new();
    for &ratio in &ratios {
        for &mode in &modes {
            grid.push(TrainConfig { mode, label_ratio: Some(ratio), ..base.clone() });
        }
    }
    eprintln!("ablation grid: {} runs", grid.len());
    let rows = run_ablation(&dataset, &grid, &[0.25, 0.5, 0.75], Some(&out))?;
    report_tables(&rows, &[], &[], &out)?;
    write_snapshot(
        &out,
        "ablate",
        serde_json::json!({"dataset": args.dataset, "modes": modes.iter().map(|m| m.label()).collect::<Vec<_>>(), "ratios": ratios, "train": base}),
        dataset.manifest.content_hash.clone(),
    )?;
    Ok(())
}

fn cmd_baselines(args: &BaselinesArgs) -> Result<()> {
    let out = resolve_out(&args.out, "baselines")?;
    let dataset = load_dataset(&args.dataset)?;
    let detector = match &args.run {
        Some(run) => Some(load_run_models(run, &dataset)?.0),
        None => None,
    };
    let als_config = AlsConfig {
        rank: args.rank,
        lambda: args.lambda,
        iterations: args.iterations,
        ..AlsConfig::default()
    };
    eprintln!("running baselines (detector inputs: {})", detector.is_some());
    let rows = table2_rows(&dataset, detector.as_ref(), &als_config)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("baseline_rows.json"), serde_json::to_string_pretty(&rows)?)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.mode.clone(),
                r.input.clone(),
                r.landmark.clone(),
                format_float(r.rate),
            ]
        })
        .collect();
    write_csv(
        &out.join("baselines.csv"),
        &["method", "mode", "input", "landmark", "pckh05"],
        &csv_rows,
    )?;
    write_snapshot(
        &out,
        "baselines",
        serde_json::json!({"dataset": args.dataset, "rank": args.rank, "lambda": args.lambda}),
        dataset.manifest.content_hash.clone(),
    )?;
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let out = resolve_out(&args.out, "report")?;
    let mut ablation: Vec<AblationRow> = Vec::new();
    let mut baselines: Vec<BaselineRow> = Vec::new();
    let mut curves: Vec<CurvePoint> = Vec::new();
    let mut hash_input = String::new();

    for run in args.runs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let dir = PathBuf::from(run);
        if !dir.exists() {
            return Err(CoreError::Dataset { reason: format!("run directory {run:?} does not exist") });
        }
        let abl = dir.join("ablation_rows.json");
        if abl.exists() {
            let data = std::fs::read_to_string(&abl)?;
            hash_input.push_str(&data);
            ablation.extend(serde_json::from_str::<Vec<AblationRow>>(&data)?);
        }
        let bas = dir.join("baseline_rows.json");
        if bas.exists() {
            let data = std::fs::read_to_string(&bas)?;
            hash_input.push_str(&data);
            baselines.extend(serde_json::from_str::<Vec<BaselineRow>>(&data)?);
        }
        let curve = dir.join("pckh_curve.csv");
        if curve.exists() {
            let data = std::fs::read_to_string(&curve)?;
            hash_input.push_str(&data);
            for line in data.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() >= 3 {
                    curves.push(CurvePoint {
                        method: cols[0].to_string(),
                        threshold: cols[1].parse().unwrap_or(f64::NAN),
                        mean_secondary: cols[2].parse().unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }
    let written = report_tables(&ablation, &baselines, &curves, &out)?;
    eprintln!("wrote {} tables", written.len());
    write_snapshot(
        &out,
        "report",
        serde_json::json!({"runs": args.runs}),
        hash_bytes(hash_input.as_bytes()),
    )?;
    Ok(())
}
