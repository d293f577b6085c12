//! Minimal neural-network engine: multilayer perceptrons with optional
//! multi-task heads, exact backprop for every loss the pipeline uses, Adam
//! with decoupled weight decay, targeted ℓ2-PGD attacks, and memory-aware
//! parameter importance.
//!
//! Models are a flat `f64` parameter vector plus an architecture
//! descriptor; all math runs in `f64` for gradient-check headroom, while
//! checkpoints store `f32` (little-endian) for compactness. Everything is
//! deterministic given seeds — there is no global RNG and no parallelism
//! inside a model evaluation.

pub mod adam;
pub mod mas;
pub mod ops;
pub mod pgd;

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mas::{mas_importance, ImportanceScores};
pub use ops::{forward, grad_ce, ForwardPass};
pub use pgd::{pgd_l2_targeted, AdversarialSet, PgdConfig};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("task index {task} out of range for {heads} heads")]
    UnknownTask { task: usize, heads: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint is malformed: {0}")]
    MalformedCheckpoint(&'static str),
}

/// Fully-connected architecture: `input → hidden… → heads[t]`, ReLU after
/// every hidden layer, linear task heads. `hidden` may be empty (a purely
/// linear model); `heads` holds one output dimension per task and is
/// `[num_classes]` in the single-task setting.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<usize>,
}

/// One dense layer's location inside the flat parameter vector. Weights
/// are row-major (`w[out * in_dim + in]`) and directly precede the biases.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LayerSpec {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Architecture {
    pub fn single_task(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        Architecture { input_dim, hidden, heads: vec![num_classes] }
    }

    /// Width of the trunk output feeding every head.
    pub fn trunk_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    /// Total flat parameter count: Σ per-layer (in·out + out).
    pub fn param_count(&self) -> usize {
        self.all_layers().iter().map(|l| l.in_dim * l.out_dim + l.out_dim).sum()
    }

    /// Trunk layers in order (empty for a linear model).
    pub fn trunk_layers(&self) -> Vec<LayerSpec> {
        self.all_layers()[..self.hidden.len()].to_vec()
    }

    /// The dense layer implementing `heads[task]`.
    pub fn head_layer(&self, task: usize) -> Result<LayerSpec, NnError> {
        self.all_layers()
            .get(self.hidden.len() + task)
            .copied()
            .ok_or(NnError::UnknownTask { task, heads: self.heads.len() })
    }

    /// Every dense layer (trunk first, then one per head) with its offsets
    /// into the flat parameter vector — the parameter-to-layer index map.
    pub fn all_layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::with_capacity(self.hidden.len() + self.heads.len());
        let mut offset = 0;
        let mut push = |in_dim: usize, out_dim: usize| {
            let weight_offset = offset;
            let bias_offset = offset + in_dim * out_dim;
            offset = bias_offset + out_dim;
            layers.push(LayerSpec { weight_offset, bias_offset, in_dim, out_dim });
        };
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            push(prev, h);
            prev = h;
        }
        for &c in &self.heads {
            push(prev, c);
        }
        layers
    }
}

/// A model: architecture plus the flat parameter vector θ.
#[derive(Clone, PartialEq, Debug)]
pub struct ModelParams {
    arch: Architecture,
    theta: Vec<f64>,
}

impl ModelParams {
    /// Wrap an existing parameter vector (length must match the
    /// architecture).
    pub fn from_theta(arch: Architecture, theta: Vec<f64>) -> Result<Self, NnError> {
        if theta.len() != arch.param_count() {
            return Err(NnError::DimensionMismatch {
                what: "parameter vector",
                expected: arch.param_count(),
                got: theta.len(),
            });
        }
        Ok(ModelParams { arch, theta })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Replace θ wholesale (e.g. with a decrypted aggregate).
    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<(), NnError> {
        if theta.len() != self.theta.len() {
            return Err(NnError::DimensionMismatch {
                what: "parameter vector",
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta = theta;
        Ok(())
    }
}

/// Seeded uniform fan-in initialization: every layer's weights and biases
/// are drawn from `U(−1/√in_dim, 1/√in_dim)`.
pub fn init_model(arch: &Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; arch.param_count()];
    for layer in arch.all_layers() {
        let bound = 1.0 / (layer.in_dim as f64).sqrt();
        let end = layer.bias_offset + layer.out_dim;
        for w in &mut theta[layer.weight_offset..end] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ModelParams { arch: arch.clone(), theta }
}

/// A minibatch: `labels.len()` rows of `input_dim` features each, flattened
/// row-major, aimed at one task head.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u32>,
    pub task: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Argmax classification accuracy over a sample set, optionally restricted
/// to samples whose true label is in `class_filter`. Argmax ties break
/// toward the lower class index. Returns 0 when no sample matches the
/// filter.
pub fn evaluate_accuracy(
    model: &ModelParams,
    inputs: &[f64],
    labels: &[u32],
    task: usize,
    class_filter: Option<&[u32]>,
) -> Result<f64, NnError> {
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&j| class_filter.is_none_or(|f| f.contains(&labels[j])))
        .collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    let input_dim = model.arch.input_dim;
    let batch = Batch {
        inputs: keep.iter().flat_map(|&j| inputs[j * input_dim..(j + 1) * input_dim].to_vec()).collect(),
        labels: keep.iter().map(|&j| labels[j]).collect(),
        task,
    };
    let pass = forward(model, &batch)?;
    let classes = model.arch.heads[task];
    let mut hits = 0usize;
    for (row, &label) in pass.probs.chunks_exact(classes).zip(&batch.labels) {
        let mut best = 0usize;
        for (k, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = k;
            }
        }
        if best == label as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / keep.len() as f64)
}

// ── Checkpoint format ───────────────────────────────────────────────────

/// Serialize a model: a length-prefixed little-endian `u32` header
/// (`count, input_dim, #hidden, hidden…, #heads, heads…`) followed by θ as
/// little-endian `f32`. Reading back and re-writing is byte-identical.
pub fn write_checkpoint<W: Write>(model: &ModelParams, mut out: W) -> std::io::Result<()> {
    let arch = &model.arch;
    let mut header: Vec<u32> = Vec::with_capacity(3 + arch.hidden.len() + arch.heads.len());
    header.push(arch.input_dim as u32);
    header.push(arch.hidden.len() as u32);
    header.extend(arch.hidden.iter().map(|&h| h as u32));
    header.push(arch.heads.len() as u32);
    header.extend(arch.heads.iter().map(|&c| c as u32));
    out.write_u32::<LittleEndian>(header.len() as u32)?;
    for v in header {
        out.write_u32::<LittleEndian>(v)?;
    }
    for &w in &model.theta {
        out.write_f32::<LittleEndian>(w as f32)?;
    }
    Ok(())
}

/// Inverse of [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams, NnError> {
    let bad = |what| NnError::MalformedCheckpoint(what);
    let count = input.read_u32::<LittleEndian>().map_err(|_| bad("missing header length"))? as usize;
    if count < 3 {
        return Err(bad("header too short"));
    }
    let mut header = Vec::with_capacity(count);
    for _ in 0..count {
        header.push(input.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize);
    }
    let input_dim = header[0];
    let hidden_count = header[1];
    let heads_start = 2 + hidden_count;
    if header.len() < heads_start + 1 {
        return Err(bad("hidden-layer list overruns header"));
    }
    let hidden = header[2..heads_start].to_vec();
    let head_count = header[heads_start];
    if header.len() != heads_start + 1 + head_count {
        return Err(bad("head list does not fill header"));
    }
    let heads = header[heads_start + 1..].to_vec();
    if heads.is_empty() || heads.contains(&0) || input_dim == 0 {
        return Err(bad("zero-sized dimension"));
    }
    let arch = Architecture { input_dim, hidden, heads };
    let mut theta = Vec::with_capacity(arch.param_count());
    for _ in 0..arch.param_count() {
        theta.push(input.read_f32::<LittleEndian>().map_err(|_| bad("truncated parameters"))? as f64);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|_| bad("unreadable tail"))? != 0 {
        return Err(bad("trailing bytes after parameters"));
    }
    ModelParams::from_theta(arch, theta).map_err(|_| bad("parameter count mismatch"))
}
