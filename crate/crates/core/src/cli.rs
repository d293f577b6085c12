//! The `fedveil` command surface: `datagen` materializes a dataset bundle,
//! `run` executes a configured experiment into a run directory, and
//! `analyze` turns a finished run (plus an optional counterfactual) into
//! report files.
//!
//! Run directory layout (names stable):
//! `config.toml` (effective config snapshot), `rounds.jsonl` (one
//! round log per line), `metrics.json`, `checkpoints/round_NNNN.bin` +
//! `checkpoints/final.bin`, `reports/` — with `baseline-rounds.jsonl`,
//! `baseline-metrics.json`, and `checkpoints/baseline-final.bin` when the
//! counterfactual retrain is enabled.
//!
//! Exit codes: 0 success, 2 config, 3 data, 4 crypto, 5 run/other.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    comm_size, indistinguishability_report, metrics_report, param_mse_drift, prediction_gap,
    timing_report, write_comm_csv, write_drift_csv, write_json, write_timing_csv, AnalysisError,
    MetricsReport,
};
use crate::config::{BackendChoice, ConfigError, DatasetSource, ExperimentConfig};
use crate::data::{
    dataset_from_idx, generate_blobs, read_idx_images, read_idx_labels, split_train_test,
    write_idx_images, write_idx_labels, BlobSpec, DataError, Dataset, IdxImages,
};
use crate::fe::backend::GroupBackend;
use crate::fe::{Bls381Backend, MockBackend};
use crate::fedsim::{
    full_retrain_baseline, run_federation, FedError, FederationRun, RoundLog,
};
use crate::nn::{read_checkpoint, write_checkpoint, ModelParams, NnError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CRYPTO: i32 = 4;
pub const EXIT_RUN: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("missing run artifact: {0}")]
    MissingRunArtifacts(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Machine-readable failure category.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Fed(e) => match e {
                FedError::Setup(_)
                | FedError::Key(_)
                | FedError::Share(_)
                | FedError::Combine(_)
                | FedError::Encrypt(_)
                | FedError::Decrypt(_)
                | FedError::Wire(_) => "crypto",
                FedError::Data(_) => "data",
                FedError::InvalidConfig(_) => "config",
                _ => "run",
            },
            _ => "run",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => EXIT_CONFIG,
            "data" => EXIT_DATA,
            "crypto" => EXIT_CRYPTO,
            _ => EXIT_RUN,
        }
    }
}

// ── Command-line grammar ────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "fedveil",
    version,
    about = "Encrypted federated unlearning: train, unlearn, aggregate under DMCFE, analyze."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate or ingest a dataset bundle (IDX files + provenance).
    Datagen(DatagenArgs),
    /// Execute a configured experiment into a run directory.
    Run(RunArgs),
    /// Produce report files from a finished run directory.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
pub struct DatagenArgs {
    /// Experiment config whose [dataset] section describes the source;
    /// without it, the default synthetic-blob source is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the generator/split seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment config (TOML; FEDVEIL_* environment overrides apply).
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Override federation.training_seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// A finished run directory (as produced by `run`).
    pub run_dir: PathBuf,
    /// A second run directory to compare against (e.g. a full retrain);
    /// enables the ε gap and the accuracy comparison table.
    #[arg(long)]
    pub counterfactual: Option<PathBuf>,
    /// Where to write reports (default: RUN_DIR/reports).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse-and-dispatch entry point; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Datagen(args) => cmd_datagen(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error({}): {err}", err.category());
            err.exit_code()
        }
    }
}

// ── Dataset loading ─────────────────────────────────────────────────────

/// A loaded train/test pair plus its provenance record.
pub struct DatasetBundle {
    pub train: Dataset,
    pub test: Dataset,
    pub rows: u32,
    pub cols: u32,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    pub classes: u32,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_class_histogram: Vec<usize>,
}

/// Keep only `keep` classes (densely relabeled in the given order).
fn filter_classes(data: &Dataset, keep: &[u32]) -> Result<Dataset, DataError> {
    let indices = data.indices_with_labels(keep);
    let subset = data.subset(&indices);
    let relabel: Vec<u32> = subset
        .labels()
        .iter()
        .map(|l| keep.iter().position(|k| k == l).expect("filtered label") as u32)
        .collect();
    Dataset::from_parts(
        subset.inputs().to_vec(),
        relabel,
        subset.input_dim(),
        keep.len() as u32,
    )
}

/// Cap each class at `cap` samples (first occurrences kept — order is the
/// file order, so this is deterministic).
fn cap_per_class(data: &Dataset, cap: usize) -> Result<Dataset, DataError> {
    let mut counts = vec![0usize; data.num_classes() as usize];
    let mut kept = Vec::new();
    for (i, &label) in data.labels().iter().enumerate() {
        if counts[label as usize] < cap {
            counts[label as usize] += 1;
            kept.push(i);
        }
    }
    Ok(data.subset(&kept))
}

/// Load the configured dataset; `seed` overrides the generator/split seed.
pub fn load_dataset(
    source: &DatasetSource,
    seed: Option<u64>,
) -> Result<DatasetBundle, CliError> {
    match source {
        DatasetSource::Blobs {
            classes,
            samples_per_class,
            rows,
            cols,
            noise,
            seed: spec_seed,
            test_fraction,
        } => {
            let spec = BlobSpec {
                classes: *classes,
                samples_per_class: *samples_per_class,
                rows: *rows,
                cols: *cols,
                noise: *noise,
                seed: seed.unwrap_or(*spec_seed),
            };
            let (images, labels) = generate_blobs(&spec);
            let data = dataset_from_idx(&images, &labels)?;
            let (train, test) = split_train_test(&data, *test_fraction, spec.seed ^ 0x5EED);
            let provenance = Provenance {
                source: "blobs".to_string(),
                seed: Some(spec.seed),
                classes: train.num_classes(),
                train_samples: train.len(),
                test_samples: test.len(),
                train_class_histogram: train.label_histogram(),
            };
            Ok(DatasetBundle { train, test, rows: *rows, cols: *cols, provenance })
        }
        DatasetSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
            test_fraction,
            keep_classes,
            max_per_class,
        } => {
            let img = read_idx_images(BufReader::new(File::open(images)?))?;
            let lbl = read_idx_labels(BufReader::new(File::open(labels)?))?;
            let mut data = dataset_from_idx(&img, &lbl)?;
            if let Some(keep) = keep_classes {
                data = filter_classes(&data, keep)?;
            }
            if let Some(cap) = max_per_class {
                data = cap_per_class(&data, *cap)?;
            }
            let (train, test) = match (test_images, test_labels) {
                (Some(ti), Some(tl)) => {
                    let img = read_idx_images(BufReader::new(File::open(ti)?))?;
                    let lbl = read_idx_labels(BufReader::new(File::open(tl)?))?;
                    let mut test = dataset_from_idx(&img, &lbl)?;
                    if let Some(keep) = keep_classes {
                        test = filter_classes(&test, keep)?;
                    }
                    (data, test)
                }
                _ => split_train_test(&data, *test_fraction, seed.unwrap_or(0) ^ 0x5EED),
            };
            let provenance = Provenance {
                source: format!("idx:{}", images.display()),
                seed,
                classes: train.num_classes(),
                train_samples: train.len(),
                test_samples: test.len(),
                train_class_histogram: train.label_histogram(),
            };
            Ok(DatasetBundle { train, test, rows: img.rows, cols: img.cols, provenance })
        }
    }
}

fn default_blob_source() -> DatasetSource {
    DatasetSource::Blobs {
        classes: 4,
        samples_per_class: 1500,
        rows: 28,
        cols: 28,
        noise: 0.15,
        seed: 0,
        test_fraction: 0.2,
    }
}

/// Convert normalized inputs back to IDX pixel bytes.
fn dataset_to_idx(data: &Dataset, rows: u32, cols: u32) -> (IdxImages, Vec<u8>) {
    let pixels: Vec<u8> =
        data.inputs().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let labels: Vec<u8> = data.labels().iter().map(|&l| l as u8).collect();
    (IdxImages { rows, cols, pixels }, labels)
}

// ── datagen ─────────────────────────────────────────────────────────────

pub fn cmd_datagen(args: &DatagenArgs) -> Result<(), CliError> {
    let source = match &args.config {
        Some(path) => ExperimentConfig::load(path)?.dataset,
        None => default_blob_source(),
    };
    let bundle = load_dataset(&source, args.seed)?;
    std::fs::create_dir_all(&args.out)?;

    for (name, data) in [("train", &bundle.train), ("test", &bundle.test)] {
        let (images, labels) = dataset_to_idx(data, bundle.rows, bundle.cols);
        let mut img_file =
            BufWriter::new(File::create(args.out.join(format!("{name}-images.idx")))?);
        write_idx_images(&images, &mut img_file)?;
        img_file.flush()?;
        let mut lbl_file =
            BufWriter::new(File::create(args.out.join(format!("{name}-labels.idx")))?);
        write_idx_labels(&labels, &mut lbl_file)?;
        lbl_file.flush()?;
    }
    write_json(&args.out.join("provenance.json"), &bundle.provenance)?;
    println!(
        "datagen: {} train / {} test samples, {} classes → {}",
        bundle.provenance.train_samples,
        bundle.provenance.test_samples,
        bundle.provenance.classes,
        args.out.display()
    );
    Ok(())
}

// ── run ─────────────────────────────────────────────────────────────────

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path)
        .map_err(|_| CliError::MissingRunArtifacts(path.display().to_string()))?;
    let mut items = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            items.push(serde_json::from_str(&line)?);
        }
    }
    Ok(items)
}

fn save_checkpoint(path: &Path, model: &ModelParams) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<ModelParams, CliError> {
    let file = File::open(path)
        .map_err(|_| CliError::MissingRunArtifacts(path.display().to_string()))?;
    Ok(read_checkpoint(BufReader::new(file))?)
}

fn run_with_backend<B: GroupBackend>(
    config: &ExperimentConfig,
    bundle: &DatasetBundle,
    out: &Path,
) -> Result<(FederationRun, Option<FederationRun>), CliError> {
    let run = run_federation::<B>(&config.federation, &bundle.train, &bundle.test)?;
    write_jsonl(&out.join("rounds.jsonl"), &run.logs)?;

    let baseline = if config.baseline {
        let retrain = full_retrain_baseline(&config.federation, &bundle.train, &bundle.test)?;
        write_jsonl(&out.join("baseline-rounds.jsonl"), &retrain.logs)?;
        Some(retrain)
    } else {
        None
    };
    Ok((run, baseline))
}

/// Emit the report files for a finished run into `dir`.
fn write_reports(
    dir: &Path,
    logs: &[RoundLog],
    history: &[Vec<f64>],
    dim: usize,
    mapping_tolerance: f64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    if history.len() >= 2 {
        write_drift_csv(&dir.join("drift.csv"), &param_mse_drift(history)?)?;
    }
    write_comm_csv(&dir.join("comm.csv"), &comm_size(logs, dim)?)?;
    write_timing_csv(&dir.join("timing.csv"), &timing_report(logs))?;
    write_json(
        &dir.join("indistinguishability.json"),
        &indistinguishability_report(logs, mapping_tolerance),
    )?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.federation.training_seed = seed;
    }
    let bundle = load_dataset(&config.dataset, None)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("config.toml"), config.to_toml()?)?;

    let (run, baseline) = match config.backend {
        BackendChoice::Mock => run_with_backend::<MockBackend>(&config, &bundle, &args.out)?,
        BackendChoice::Bls381 => run_with_backend::<Bls381Backend>(&config, &bundle, &args.out)?,
    };

    let checkpoint_dir = args.out.join("checkpoints");
    std::fs::create_dir_all(&checkpoint_dir)?;
    save_checkpoint(&checkpoint_dir.join("final.bin"), &run.final_model)?;
    if config.output.checkpoints {
        for (r, theta) in run.model_history.iter().enumerate() {
            let model =
                ModelParams::from_theta(config.federation.architecture.clone(), theta.clone())?;
            save_checkpoint(&checkpoint_dir.join(format!("round_{r:04}.bin")), &model)?;
        }
    }

    let metrics = metrics_report(
        &run,
        baseline.as_ref().map(|b| &b.final_model),
        bundle.test.inputs(),
        0,
    )?;
    write_json(&args.out.join("metrics.json"), &metrics)?;

    if let Some(retrain) = &baseline {
        save_checkpoint(&checkpoint_dir.join("baseline-final.bin"), &retrain.final_model)?;
        let baseline_metrics = metrics_report(retrain, None, bundle.test.inputs(), 0)?;
        write_json(&args.out.join("baseline-metrics.json"), &baseline_metrics)?;
    }

    if config.output.reports {
        write_reports(
            &args.out.join("reports"),
            &run.logs,
            &run.model_history,
            config.federation.architecture.param_count(),
            config.output.mapping_tolerance,
        )?;
    }

    println!(
        "run: {} rounds, final retained accuracy {:.4}{} → {}",
        run.logs.len(),
        metrics.acc_retained,
        metrics
            .acc_forgotten
            .map(|a| format!(", forgotten {a:.4}"))
            .unwrap_or_default(),
        args.out.display()
    );
    Ok(())
}

// ── analyze ─────────────────────────────────────────────────────────────

/// Accuracy/ε comparison table against a counterfactual run.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonTable {
    pub run: MetricsReport,
    pub counterfactual: MetricsReport,
    pub epsilon_gap: f64,
}

fn read_run_config(dir: &Path) -> Result<ExperimentConfig, CliError> {
    let path = dir.join("config.toml");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::MissingRunArtifacts(path.display().to_string()))?;
    // The snapshot is already effective: no further env overrides.
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(ConfigError::Parse(e)))?;
    Ok(config)
}

fn read_history(dir: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let checkpoint_dir = dir.join("checkpoints");
    let mut rounds: Vec<(usize, PathBuf)> = Vec::new();
    if checkpoint_dir.is_dir() {
        for entry in std::fs::read_dir(&checkpoint_dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(num) = name.strip_prefix("round_").and_then(|s| s.strip_suffix(".bin")) {
                if let Ok(r) = num.parse::<usize>() {
                    rounds.push((r, path));
                }
            }
        }
    }
    rounds.sort();
    let mut history = Vec::with_capacity(rounds.len());
    for (_, path) in rounds {
        history.push(load_checkpoint(&path)?.theta().to_vec());
    }
    Ok(history)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let config = read_run_config(&args.run_dir)?;
    let logs: Vec<RoundLog> = read_jsonl(&args.run_dir.join("rounds.jsonl"))?;
    let history = read_history(&args.run_dir)?;
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("reports"));
    write_reports(
        &out,
        &logs,
        &history,
        config.federation.architecture.param_count(),
        config.output.mapping_tolerance,
    )?;

    if let Some(counter_dir) = &args.counterfactual {
        let ours = load_checkpoint(&args.run_dir.join("checkpoints").join("final.bin"))?;
        let theirs = load_checkpoint(&counter_dir.join("checkpoints").join("final.bin"))?;
        let bundle = load_dataset(&config.dataset, None)?;
        let epsilon = prediction_gap(&ours, &theirs, bundle.test.inputs(), 0)?;

        let run_metrics: MetricsReport =
            serde_json::from_reader(File::open(args.run_dir.join("metrics.json")).map_err(
                |_| CliError::MissingRunArtifacts("metrics.json".to_string()),
            )?)?;
        let counter_metrics_path = counter_dir.join("metrics.json");
        let counter_metrics: MetricsReport = serde_json::from_reader(
            File::open(&counter_metrics_path).map_err(|_| {
                CliError::MissingRunArtifacts(counter_metrics_path.display().to_string())
            })?,
        )?;
        let table = ComparisonTable {
            run: run_metrics,
            counterfactual: counter_metrics,
            epsilon_gap: epsilon,
        };
        write_json(&out.join("comparison.json"), &table)?;
        println!("analyze: ε = {epsilon:.6} → {}", out.display());
    } else {
        println!("analyze: reports → {}", out.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_config_text(dir: &Path) -> String {
        format!(
            r#"
backend = "mock"
baseline = true

[dataset]
source = "blobs"
classes = 3
samples_per_class = 40
rows = 3
cols = 3
noise = 0.12
seed = 11
test_fraction = 0.25

[federation]
clients = 3
rounds = 4
kappa = 8
dirichlet_alpha = 1.0
batch_size = 16
unlearn_start_round = 2
unlearn_window = 2
unlearning_clients = 1

[federation.forget]
mode = "class-wise"
gamma_c = 0.34
classes = [1]
seed = 5

[federation.architecture]
input_dim = 9
hidden = [6]
heads = [3]
"#
        ) + &format!("\n# run dir {}\n", dir.display())
    }

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("exp.toml");
        std::fs::write(&path, blob_config_text(dir)).unwrap();
        path
    }

    #[test]
    fn datagen_writes_a_loadable_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bundle");
        cmd_datagen(&DatagenArgs {
            config: Some(write_config(dir.path())),
            out: out.clone(),
            seed: Some(3),
        })
        .unwrap();

        let img = read_idx_images(BufReader::new(
            File::open(out.join("train-images.idx")).unwrap(),
        ))
        .unwrap();
        let lbl = read_idx_labels(BufReader::new(
            File::open(out.join("train-labels.idx")).unwrap(),
        ))
        .unwrap();
        assert_eq!(img.count(), lbl.len());
        assert_eq!(img.rows * img.cols, 9);
        assert!(out.join("test-images.idx").exists());
        assert!(out.join("provenance.json").exists());
    }

    #[test]
    fn run_and_analyze_produce_the_documented_layout() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(dir.path());
        let out = dir.path().join("run");
        cmd_run(&RunArgs { config: config_path, out: out.clone(), seed: None }).unwrap();

        for artifact in [
            "config.toml",
            "rounds.jsonl",
            "metrics.json",
            "baseline-rounds.jsonl",
            "baseline-metrics.json",
        ] {
            assert!(out.join(artifact).exists(), "missing {artifact}");
        }
        for artifact in ["final.bin", "baseline-final.bin", "round_0000.bin", "round_0003.bin"] {
            assert!(out.join("checkpoints").join(artifact).exists(), "missing {artifact}");
        }
        for artifact in ["drift.csv", "comm.csv", "timing.csv", "indistinguishability.json"] {
            assert!(out.join("reports").join(artifact).exists(), "missing {artifact}");
        }

        // Drift CSV has R − 1 data rows.
        let drift = std::fs::read_to_string(out.join("reports").join("drift.csv")).unwrap();
        assert_eq!(drift.lines().count(), 1 + 3);

        // Logged rounds parse back.
        let logs: Vec<RoundLog> = read_jsonl(&out.join("rounds.jsonl")).unwrap();
        assert_eq!(logs.len(), 4);

        // metrics.json carries the ε gap against the baseline.
        let metrics: MetricsReport =
            serde_json::from_reader(File::open(out.join("metrics.json")).unwrap()).unwrap();
        assert!(metrics.epsilon_gap.is_some());
        assert_eq!(metrics.rounds, 4);

        // Analyze the run against itself: ε must be exactly 0.
        let reports2 = dir.path().join("reports2");
        cmd_analyze(&AnalyzeArgs {
            run_dir: out.clone(),
            counterfactual: Some(out.clone()),
            out: Some(reports2.clone()),
        })
        .unwrap();
        let table: serde_json::Value =
            serde_json::from_reader(File::open(reports2.join("comparison.json")).unwrap())
                .unwrap();
        assert_eq!(table["epsilon_gap"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn identical_seeds_reproduce_the_final_digest() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(dir.path());
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_run(&RunArgs { config: config_path.clone(), out: out_a.clone(), seed: Some(77) })
            .unwrap();
        cmd_run(&RunArgs { config: config_path, out: out_b.clone(), seed: Some(77) }).unwrap();
        let digest = |dir: &Path| {
            let logs: Vec<RoundLog> = read_jsonl(&dir.join("rounds.jsonl")).unwrap();
            logs.last().unwrap().global_digest.clone()
        };
        assert_eq!(digest(&out_a), digest(&out_b));
        assert_eq!(
            std::fs::read(out_a.join("checkpoints/final.bin")).unwrap(),
            std::fs::read(out_b.join("checkpoints/final.bin")).unwrap(),
        );
        assert_eq!(
            std::fs::read(out_a.join("metrics.json")).unwrap(),
            std::fs::read(out_b.join("metrics.json")).unwrap(),
        );
    }

    #[test]
    fn analyze_without_run_artifacts_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_analyze(&AnalyzeArgs {
            run_dir: dir.path().to_path_buf(),
            counterfactual: None,
            out: None,
        })
        .unwrap_err();
        assert!(matches!(err, CliError::MissingRunArtifacts(_)), "{err}");
        assert_eq!(err.exit_code(), EXIT_RUN);
    }

    #[test]
    fn error_categories_map_to_distinct_exit_codes() {
        let config_err = CliError::Config(ConfigError::Invalid("x".into()));
        let data_err = CliError::Data(DataError::Empty);
        let crypto_err = CliError::Fed(FedError::Decrypt(
            crate::fe::DecryptError::DecryptionFailure,
        ));
        let run_err = CliError::MissingRunArtifacts("y".into());
        let codes = [
            config_err.exit_code(),
            data_err.exit_code(),
            crypto_err.exit_code(),
            run_err.exit_code(),
        ];
        assert_eq!(codes, [EXIT_CONFIG, EXIT_DATA, EXIT_CRYPTO, EXIT_RUN]);
        assert_eq!(config_err.category(), "config");
        assert_eq!(crypto_err.category(), "crypto");
    }

    #[test]
    fn filtering_and_capping_reshape_idx_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        // Materialize a 3-class blob bundle as IDX files first.
        let bundle_dir = dir.path().join("bundle");
        cmd_datagen(&DatagenArgs {
            config: Some(write_config(dir.path())),
            out: bundle_dir.clone(),
            seed: Some(4),
        })
        .unwrap();

        let source = DatasetSource::Idx {
            images: bundle_dir.join("train-images.idx"),
            labels: bundle_dir.join("train-labels.idx"),
            test_images: None,
            test_labels: None,
            test_fraction: 0.2,
            keep_classes: Some(vec![2, 0]),
            max_per_class: Some(5),
        };
        let bundle = load_dataset(&source, Some(1)).unwrap();
        assert_eq!(bundle.train.num_classes(), 2);
        let hist: Vec<usize> = bundle.train.label_histogram();
        assert!(hist.iter().all(|&c| c <= 5));
        let total = bundle.train.len() + bundle.test.len();
        assert!(total <= 10);
    }
}
