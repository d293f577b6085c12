//! Post-run analysis: unlearning-efficacy metrics (accuracy table, ε
//! prediction gap), and the three detectability studies — parameter-drift
//! MSE, per-round client timing, and communication size — plus the
//! structural update-type indistinguishability report.
//!
//! Everything here is a pure consumer of finished-run data (round logs,
//! model snapshots); nothing feeds back into training.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fedsim::{FederationRun, RoundLog};
use crate::nn::{forward, Batch, ModelParams, NnError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("models have different architectures")]
    ArchitectureMismatch,
    #[error("need at least 2 models for a drift series, got {got}")]
    TooFewModels { got: usize },
    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: &'static str },
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("communication ratio is undefined for a zero-parameter model")]
    UndefinedRatio,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// ── ε prediction gap ────────────────────────────────────────────────────

/// Mean per-sample ℓ2 distance between two models' softmax outputs on a
/// validation set: `ε = (1/|D|) Σ_x ‖p_a(x) − p_b(x)‖₂`.
///
/// A pseudometric over models for a fixed validation set — zero for
/// identical models, symmetric, and triangle-inequality-compatible — used
/// as the proxy for residual influence of forgotten data.
pub fn prediction_gap(
    a: &ModelParams,
    b: &ModelParams,
    inputs: &[f64],
    task: usize,
) -> Result<f64, AnalysisError> {
    if a.arch() != b.arch() {
        return Err(AnalysisError::ArchitectureMismatch);
    }
    let dim = a.arch().input_dim;
    if inputs.is_empty() {
        return Err(AnalysisError::EmptyValidationSet);
    }
    if inputs.len() % dim != 0 {
        return Err(AnalysisError::DimensionMismatch { what: "validation inputs" });
    }
    let samples = inputs.len() / dim;
    let batch = Batch { inputs: inputs.to_vec(), labels: vec![0; samples], task };
    let pa = forward(a, &batch)?;
    let pb = forward(b, &batch)?;
    let classes = pa.probs.len() / samples;
    let mut total = 0.0;
    for s in 0..samples {
        let row = &pa.probs[s * classes..(s + 1) * classes];
        let other = &pb.probs[s * classes..(s + 1) * classes];
        let sq: f64 = row.iter().zip(other).map(|(x, y)| (x - y) * (x - y)).sum();
        total += sq.sqrt();
    }
    Ok(total / samples as f64)
}

// ── Parameter-drift MSE ─────────────────────────────────────────────────

/// Consecutive-round parameter drift: raw per-step MSE, the max used as
/// the normalizer, and the normalized series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    /// `MSE_r = (1/d)‖θ^{r+1} − θ^r‖²`, length = models − 1.
    pub mse: Vec<f64>,
    /// Max observed MSE (0 for a constant sequence).
    pub normalizer: f64,
    /// `mse / normalizer`, in [0,1]; all zeros when the normalizer is 0.
    pub normalized: Vec<f64>,
}

/// Drift of a model trajectory (θ per round, oldest first).
pub fn param_mse_drift(thetas: &[Vec<f64>]) -> Result<DriftSeries, AnalysisError> {
    if thetas.len() < 2 {
        return Err(AnalysisError::TooFewModels { got: thetas.len() });
    }
    let d = thetas[0].len();
    if d == 0 || thetas.iter().any(|t| t.len() != d) {
        return Err(AnalysisError::DimensionMismatch { what: "model trajectory" });
    }
    let mse: Vec<f64> = thetas
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d as f64)
        .collect();
    let normalizer = mse.iter().copied().fold(0.0, f64::max);
    let normalized = if normalizer > 0.0 {
        mse.iter().map(|m| m / normalizer).collect()
    } else {
        vec![0.0; mse.len()]
    };
    Ok(DriftSeries { mse, normalizer, normalized })
}

// ── Communication size ──────────────────────────────────────────────────

/// One round's update sizes: raw serialized bytes and DEFLATE-compressed
/// bytes per participant, each compressed size also normalized against the
/// plain-FedAvg baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommRound {
    pub round: u64,
    pub raw_bytes: Vec<u64>,
    pub deflate_bytes: Vec<u64>,
    pub normalized: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    /// Uncompressed dense-update baseline: 4 bytes (one f32 delta) per
    /// parameter — a function of d alone, independent of phase.
    pub baseline_bytes: u64,
    pub rounds: Vec<CommRound>,
    /// Largest normalized size over every participant of every round.
    pub max_normalized: f64,
}

/// Per-round communication sizes from a run's logs, normalized against
/// the `4d`-byte uncompressed FedAvg baseline.
pub fn comm_size(logs: &[RoundLog], dim: usize) -> Result<CommReport, AnalysisError> {
    if dim == 0 {
        return Err(AnalysisError::UndefinedRatio);
    }
    let baseline = 4 * dim as u64;
    let mut rounds = Vec::with_capacity(logs.len());
    let mut max_normalized: f64 = 0.0;
    for log in logs {
        let raw_bytes: Vec<u64> = log
            .ciphertext_bytes
            .iter()
            .zip(&log.key_share_bytes)
            .zip(&log.mapping_bytes)
            .map(|((c, k), m)| 8 + 32 + c + k + m)
            .collect();
        let normalized: Vec<f64> = log
            .payload_deflate_bytes
            .iter()
            .map(|&z| z as f64 / baseline as f64)
            .collect();
        for &n in &normalized {
            max_normalized = max_normalized.max(n);
        }
        rounds.push(CommRound {
            round: log.round,
            raw_bytes,
            deflate_bytes: log.payload_deflate_bytes.clone(),
            normalized,
        });
    }
    Ok(CommReport { baseline_bytes: baseline, rounds, max_normalized })
}

// ── Timing ──────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub round: u64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Whether any participant unlearned this round.
    pub unlearning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_round: Vec<RoundTiming>,
    /// Mean wall time over all learning-phase client updates.
    pub mean_learn_ms: f64,
    /// Mean over all unlearning client updates (absent without any).
    pub mean_unlearn_ms: Option<f64>,
    /// `mean_unlearn − mean_learn` (informational).
    pub phase_delta_ms: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-round client wall times split by phase. Timing is measured, never
/// derived: this report is informational and excluded from determinism
/// guarantees.
pub fn timing_report(logs: &[RoundLog]) -> TimingReport {
    let mut per_round = Vec::with_capacity(logs.len());
    let mut learn = Vec::new();
    let mut unlearn = Vec::new();
    for log in logs {
        if !log.wall_ms.is_empty() {
            per_round.push(RoundTiming {
                round: log.round,
                mean_ms: mean(&log.wall_ms),
                min_ms: log.wall_ms.iter().copied().fold(f64::INFINITY, f64::min),
                max_ms: log.wall_ms.iter().copied().fold(0.0, f64::max),
                unlearning: !log.unlearning_participants.is_empty(),
            });
        }
        for (id, &ms) in log.participants.iter().zip(&log.wall_ms) {
            if log.unlearning_participants.contains(id) {
                unlearn.push(ms);
            } else {
                learn.push(ms);
            }
        }
    }
    let mean_learn_ms = mean(&learn);
    let mean_unlearn_ms = if unlearn.is_empty() { None } else { Some(mean(&unlearn)) };
    TimingReport {
        per_round,
        mean_learn_ms,
        mean_unlearn_ms,
        phase_delta_ms: mean_unlearn_ms.map(|u| u - mean_learn_ms),
    }
}

// ── Update-type indistinguishability ────────────────────────────────────

/// Structural indistinguishability indicators: can an observer separate
/// learning from unlearning senders by update shape alone?
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndistinguishabilityReport {
    /// Every update carries exactly the same fields (one ciphertext block,
    /// one key share, one mapping — nothing extra, nothing missing).
    pub schema_identical: bool,
    /// Ciphertext-block byte lengths identical across every update of both
    /// phases.
    pub ciphertext_lengths_equal: bool,
    /// Key-share byte lengths identical across every update of both phases.
    pub key_share_lengths_equal: bool,
    /// Mapping-payload mean lengths agree across phases within the
    /// configured relative tolerance.
    pub mapping_within_tolerance: bool,
    pub pass: bool,
}

/// Check the three structural indicators over a full run. `tolerance` is
/// the allowed relative difference between per-phase mean mapping lengths
/// (the two hard indicators accept no tolerance at all).
pub fn indistinguishability_report(
    logs: &[RoundLog],
    tolerance: f64,
) -> IndistinguishabilityReport {
    let mut schema_identical = true;
    let mut ct_lens = Vec::new();
    let mut share_lens = Vec::new();
    let mut map_learn = Vec::new();
    let mut map_unlearn = Vec::new();
    for log in logs {
        let n = log.participants.len();
        if log.ciphertext_bytes.len() != n
            || log.key_share_bytes.len() != n
            || log.mapping_bytes.len() != n
        {
            schema_identical = false;
            continue;
        }
        ct_lens.extend_from_slice(&log.ciphertext_bytes);
        share_lens.extend_from_slice(&log.key_share_bytes);
        for (i, id) in log.participants.iter().enumerate() {
            if log.unlearning_participants.contains(id) {
                map_unlearn.push(log.mapping_bytes[i] as f64);
            } else {
                map_learn.push(log.mapping_bytes[i] as f64);
            }
        }
    }
    let all_equal = |v: &[u64]| v.windows(2).all(|w| w[0] == w[1]);
    let ciphertext_lengths_equal = all_equal(&ct_lens);
    let key_share_lengths_equal = all_equal(&share_lens);
    let mapping_within_tolerance = if map_unlearn.is_empty() || map_learn.is_empty() {
        true
    } else {
        let a = mean(&map_learn);
        let b = mean(&map_unlearn);
        (a - b).abs() <= tolerance * a.max(b)
    };
    let pass = schema_identical
        && ciphertext_lengths_equal
        && key_share_lengths_equal
        && mapping_within_tolerance;
    IndistinguishabilityReport {
        schema_identical,
        ciphertext_lengths_equal,
        key_share_lengths_equal,
        mapping_within_tolerance,
        pass,
    }
}

// ── Run-level metrics ───────────────────────────────────────────────────

/// The accuracy table plus the ε gap against a counterfactual model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Final-round test accuracy on retained classes.
    pub acc_retained: f64,
    /// Final-round accuracy on forgotten classes (class-wise modes only,
    /// mirroring the "--" cells elsewhere).
    pub acc_forgotten: Option<f64>,
    pub acc_retained_series: Vec<f64>,
    pub acc_forgotten_series: Option<Vec<f64>>,
    /// ε gap to the supplied counterfactual (e.g. the full retrain).
    pub epsilon_gap: Option<f64>,
    pub rounds: usize,
    pub forgotten_classes: Vec<u32>,
    pub unlearning_clients: Vec<u32>,
}

pub fn metrics_report(
    run: &FederationRun,
    counterfactual: Option<&ModelParams>,
    validation_inputs: &[f64],
    task: usize,
) -> Result<MetricsReport, AnalysisError> {
    let acc_retained_series: Vec<f64> = run.logs.iter().map(|l| l.acc_retained).collect();
    let acc_forgotten_series: Option<Vec<f64>> =
        run.logs.iter().map(|l| l.acc_forgotten).collect();
    let epsilon_gap = counterfactual
        .map(|m| prediction_gap(&run.final_model, m, validation_inputs, task))
        .transpose()?;
    Ok(MetricsReport {
        acc_retained: *acc_retained_series.last().unwrap_or(&0.0),
        acc_forgotten: acc_forgotten_series.as_ref().and_then(|s| s.last().copied()),
        acc_retained_series,
        acc_forgotten_series,
        epsilon_gap,
        rounds: run.logs.len(),
        forgotten_classes: run.forgotten_classes.clone(),
        unlearning_clients: run.unlearning_clients.clone(),
    })
}

// ── Report files ────────────────────────────────────────────────────────

/// `drift.csv`: round, mse, normalized.
pub fn write_drift_csv(path: &Path, drift: &DriftSeries) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "round,mse,normalized")?;
    for (r, (m, n)) in drift.mse.iter().zip(&drift.normalized).enumerate() {
        writeln!(f, "{r},{m},{n}")?;
    }
    Ok(())
}

/// `comm.csv`: round, participant, raw_bytes, deflate_bytes, normalized.
pub fn write_comm_csv(path: &Path, report: &CommReport) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "round,participant,raw_bytes,deflate_bytes,normalized")?;
    for round in &report.rounds {
        for (i, ((raw, z), n)) in round
            .raw_bytes
            .iter()
            .zip(&round.deflate_bytes)
            .zip(&round.normalized)
            .enumerate()
        {
            writeln!(f, "{},{i},{raw},{z},{n}", round.round)?;
        }
    }
    Ok(())
}

/// `timing.csv`: round, mean_ms, min_ms, max_ms, unlearning.
pub fn write_timing_csv(path: &Path, report: &TimingReport) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "round,mean_ms,min_ms,max_ms,unlearning")?;
    for r in &report.per_round {
        writeln!(f, "{},{},{},{},{}", r.round, r.mean_ms, r.min_ms, r.max_ms, r.unlearning)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
