//! Client-side unlearning: forget-set construction, the composite
//! unlearning objective, and the local update procedures.
//!
//! The composite loss steered by [`UnlearnContext`] combines three terms
//! over a forget batch `b` and its paired adversarial batch `b_adv`:
//!
//! ```text
//! L = λ_forget · (−CE(b)) + λ_adv · CE(b_adv) + λ_drift · Σ_j ω̄_j (θ_j − θ̃_j)²
//! ```
//!
//! — gradient ascent on the forget data, descent toward the adversarial
//! (wrong-label) variants to collapse the features, and a quadratic tether
//! to the pre-unlearning snapshot θ̃ weighted by the *inverted* importance
//! ω̄ = 1 − Ω, so parameters that matter most to the forget data move
//! freely while the rest stay put.
//!
//! Local updates run behind a small strategy interface so alternative
//! unlearning procedures plug into the same train→cluster→encrypt path;
//! the built-ins are `"composite"` (the loss above) and `"gradient-ascent"`
//! (negated cross-entropy only).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{shuffled_batches, DataError, Dataset};
use crate::nn::{
    adam_step, grad_ce, mas_importance, pgd_l2_targeted, AdamConfig, AdamState, AdversarialSet,
    Batch, ModelParams, NnError, PgdConfig,
};

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("{which} must lie in (0,1], got {value}")]
    InvalidFraction { which: &'static str, value: f64 },
    #[error("empty forget set: no samples match the forget specification")]
    EmptyForgetSet,
    #[error("cannot pick an incorrect target label with fewer than two classes")]
    SingleClassTask,
    #[error("unlearning context mismatch: {what} expected {expected}, got {got}")]
    ContextDimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("importance score {0} outside [0,1]")]
    ImportanceOutOfRange(f64),
    #[error("unknown unlearning strategy {0:?} (built-ins: composite, gradient-ascent)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A dataset bound to the task head it trains.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub task: usize,
    pub data: Dataset,
}

/// What to forget. Exactly one mode; fractions in `(0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ForgetMode {
    /// Remove a random fraction of each client's samples.
    SampleWise { gamma_s: f64 },
    /// Remove every sample of ⌈γ_c·C⌉ classes. An explicit class list
    /// overrides the seeded draw.
    ClassWise {
        gamma_c: f64,
        #[serde(default)]
        classes: Vec<u32>,
    },
    /// Mark one whole task head for removal.
    TaskLevel { task: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgetSpec {
    #[serde(flatten)]
    pub mode: ForgetMode,
    pub seed: u64,
}

impl ForgetSpec {
    pub fn validate(&self) -> Result<(), UnlearnError> {
        match self.mode {
            ForgetMode::SampleWise { gamma_s } if !(gamma_s > 0.0 && gamma_s <= 1.0) => {
                Err(UnlearnError::InvalidFraction { which: "gamma_s", value: gamma_s })
            }
            ForgetMode::ClassWise { gamma_c, .. } if !(gamma_c > 0.0 && gamma_c <= 1.0) => {
                Err(UnlearnError::InvalidFraction { which: "gamma_c", value: gamma_c })
            }
            _ => Ok(()),
        }
    }

    /// The concrete classes the class-wise mode removes: the explicit list
    /// when given, else a seeded draw of ⌈γ_c·C⌉ distinct classes.
    pub fn forgotten_classes(&self, num_classes: u32) -> Vec<u32> {
        match &self.mode {
            ForgetMode::ClassWise { classes, .. } if !classes.is_empty() => classes.clone(),
            ForgetMode::ClassWise { gamma_c, .. } => {
                let k = (gamma_c * num_classes as f64).ceil() as usize;
                let k = k.clamp(1, num_classes as usize);
                let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
                let mut picked = rand::seq::index::sample(&mut rng, num_classes as usize, k)
                    .into_iter()
                    .map(|c| c as u32)
                    .collect::<Vec<_>>();
                picked.sort_unstable();
                picked
            }
            _ => Vec::new(),
        }
    }
}

/// One client's data split into what it keeps training on and what it
/// unlearns. Tasks with no remaining samples are dropped from the side
/// they emptied.
#[derive(Clone, Debug, PartialEq)]
pub struct ForgetSplit {
    pub retain: Vec<TaskData>,
    pub forget: Vec<TaskData>,
}

/// Split every given client dataset per the spec. Callers pass only the
/// clients designated for unlearning; `client_index` (position in the
/// slice) diversifies the sample-wise draw.
pub fn build_forget_sets(
    clients: &[Vec<TaskData>],
    spec: &ForgetSpec,
    num_classes: u32,
) -> Result<Vec<ForgetSplit>, UnlearnError> {
    spec.validate()?;
    clients
        .iter()
        .enumerate()
        .map(|(client_index, tasks)| split_client(tasks, spec, num_classes, client_index))
        .collect()
}

fn split_client(
    tasks: &[TaskData],
    spec: &ForgetSpec,
    num_classes: u32,
    client_index: usize,
) -> Result<ForgetSplit, UnlearnError> {
    let mut retain = Vec::new();
    let mut forget = Vec::new();
    match &spec.mode {
        ForgetMode::SampleWise { gamma_s } => {
            let mut rng =
                ChaCha20Rng::seed_from_u64(spec.seed ^ (client_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for td in tasks {
                let n = td.data.len();
                let k = ((gamma_s * n as f64).round() as usize).clamp(1, n);
                let mut chosen = rand::seq::index::sample(&mut rng, n, k).into_vec();
                chosen.sort_unstable();
                let kept: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                forget.push(TaskData { task: td.task, data: td.data.subset(&chosen) });
                if !kept.is_empty() {
                    retain.push(TaskData { task: td.task, data: td.data.subset(&kept) });
                }
            }
        }
        ForgetMode::ClassWise { .. } => {
            let classes = spec.forgotten_classes(num_classes);
            for td in tasks {
                let hit = td.data.indices_with_labels(&classes);
                let kept: Vec<usize> = (0..td.data.len()).filter(|i| !hit.contains(i)).collect();
                if !hit.is_empty() {
                    forget.push(TaskData { task: td.task, data: td.data.subset(&hit) });
                }
                if !kept.is_empty() {
                    retain.push(TaskData { task: td.task, data: td.data.subset(&kept) });
                }
            }
        }
        ForgetMode::TaskLevel { task } => {
            for td in tasks {
                if td.task == *task {
                    forget.push(td.clone());
                } else {
                    retain.push(td.clone());
                }
            }
        }
    }
    if forget.is_empty() {
        return Err(UnlearnError::EmptyForgetSet);
    }
    Ok(ForgetSplit { retain, forget })
}

/// Build the adversarial companion of a forget set: one perturbed sample
/// per forget sample, each steered toward a uniformly drawn *incorrect*
/// label. Generated once before the unlearning window and reused.
pub fn gen_adv_forget_set(
    model: &ModelParams,
    forget: &TaskData,
    config: &PgdConfig,
    seed: u64,
) -> Result<AdversarialSet, UnlearnError> {
    if forget.data.is_empty() {
        return Err(UnlearnError::EmptyForgetSet);
    }
    let classes = model.arch().head_layer(forget.task)?.out_dim as u32;
    if classes < 2 {
        return Err(UnlearnError::SingleClassTask);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let targets: Vec<u32> = forget
        .data
        .labels()
        .iter()
        .map(|&y| {
            let draw = rng.random_range(0..classes - 1);
            if draw >= y {
                draw + 1
            } else {
                draw
            }
        })
        .collect();
    // The target RNG and the perturbation RNG are decoupled streams.
    let adv = pgd_l2_targeted(
        model,
        forget.data.inputs(),
        &targets,
        forget.task,
        config,
        seed.wrapping_add(1),
    )?;
    Ok(adv)
}

/// Everything the composite objective needs beyond the live model: the
/// pre-unlearning snapshot θ̃, inverted importance ω̄ = 1 − Ω, the
/// adversarial forget set, and the term weights.
#[derive(Clone, Debug)]
pub struct UnlearnContext {
    theta_snapshot: Vec<f64>,
    omega_bar: Vec<f64>,
    pub adversarial: AdversarialSet,
    pub lambda_forget: f64,
    pub lambda_adv: f64,
    pub lambda_drift: f64,
}

/// Term weights for the composite loss; the defaults weight every term 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermWeights {
    pub lambda_forget: f64,
    pub lambda_adv: f64,
    pub lambda_drift: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        TermWeights { lambda_forget: 1.0, lambda_adv: 1.0, lambda_drift: 1.0 }
    }
}

impl UnlearnContext {
    /// `importance` is the normalized per-parameter importance Ω ∈ [0,1]
    /// (stored inverted).
    pub fn new(
        theta_snapshot: Vec<f64>,
        importance: &[f64],
        adversarial: AdversarialSet,
        weights: TermWeights,
    ) -> Result<Self, UnlearnError> {
        if importance.len() != theta_snapshot.len() {
            return Err(UnlearnError::ContextDimensionMismatch {
                what: "importance vector",
                expected: theta_snapshot.len(),
                got: importance.len(),
            });
        }
        if let Some(&bad) = importance.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(UnlearnError::ImportanceOutOfRange(bad));
        }
        Ok(UnlearnContext {
            omega_bar: importance.iter().map(|v| 1.0 - v).collect(),
            theta_snapshot,
            adversarial,
            lambda_forget: weights.lambda_forget,
            lambda_adv: weights.lambda_adv,
            lambda_drift: weights.lambda_drift,
        })
    }

    pub fn theta_snapshot(&self) -> &[f64] {
        &self.theta_snapshot
    }

    pub fn omega_bar(&self) -> &[f64] {
        &self.omega_bar
    }
}

/// Snapshot the model at the start of the unlearning window and derive the
/// full context: importance from the forget data, adversarial set, θ̃.
pub fn build_unlearn_context(
    model: &ModelParams,
    forget: &TaskData,
    pgd: &PgdConfig,
    weights: TermWeights,
    seed: u64,
) -> Result<UnlearnContext, UnlearnError> {
    let importance = mas_importance(model, forget.data.inputs(), forget.task)?;
    let adversarial = gen_adv_forget_set(model, forget, pgd, seed)?;
    UnlearnContext::new(model.theta().to_vec(), &importance.normalized, adversarial, weights)
}

/// Gradient and value of the composite unlearning loss for one paired
/// (forget, adversarial) batch.
pub fn unlearn_grad(
    model: &ModelParams,
    forget_batch: &Batch,
    adv_batch: &Batch,
    ctx: &UnlearnContext,
) -> Result<(Vec<f64>, f64), UnlearnError> {
    let d = model.theta().len();
    if ctx.theta_snapshot.len() != d {
        return Err(UnlearnError::ContextDimensionMismatch {
            what: "theta snapshot",
            expected: d,
            got: ctx.theta_snapshot.len(),
        });
    }
    let (g_forget, ce_forget) = grad_ce(model, forget_batch)?;
    let (g_adv, ce_adv) = grad_ce(model, adv_batch)?;
    let mut grad = vec![0.0; d];
    let mut drift = 0.0;
    for j in 0..d {
        let dev = model.theta()[j] - ctx.theta_snapshot[j];
        drift += ctx.omega_bar[j] * dev * dev;
        grad[j] = -ctx.lambda_forget * g_forget[j]
            + ctx.lambda_adv * g_adv[j]
            + 2.0 * ctx.lambda_drift * ctx.omega_bar[j] * dev;
    }
    let loss = -ctx.lambda_forget * ce_forget + ctx.lambda_adv * ce_adv + ctx.lambda_drift * drift;
    Ok((grad, loss))
}

/// Local optimizer knobs shared by every update procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for LocalOptConfig {
    fn default() -> Self {
        LocalOptConfig { epochs: 1, batch_size: 64, adam: AdamConfig::default() }
    }
}

/// One client's local update for a round.
///
/// With no forget data (or no context) this is plain local training:
/// `epochs` of cross-entropy minimization over the retain sets. Otherwise
/// it optimizes the composite loss over paired (forget, adversarial)
/// batches; when `co_train_retain` is set (task-level unlearning) each
/// step additionally descends the retained tasks' cross-entropy.
pub fn client_update(
    global: &ModelParams,
    retain: &[TaskData],
    forget: &[TaskData],
    ctx: Option<&UnlearnContext>,
    co_train_retain: bool,
    opt: &LocalOptConfig,
    seed: u64,
) -> Result<ModelParams, UnlearnError> {
    let mut model = global.clone();
    let mut adam = AdamState::new(model.theta().len());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let ctx = match (forget.is_empty(), ctx) {
        (false, Some(ctx)) => ctx,
        _ => {
            // Learning branch: plain local cross-entropy training.
            for _ in 0..opt.epochs {
                for td in retain {
                    for idx in shuffled_batches(td.data.len(), opt.batch_size, &mut rng) {
                        let batch = td.data.batch(&idx, td.task);
                        let (grad, _) = grad_ce(&model, &batch)?;
                        adam_step(&mut model, &grad, &mut adam, &opt.adam)?;
                    }
                }
            }
            return Ok(model);
        }
    };
    if forget.len() != 1 {
        return Err(UnlearnError::ContextDimensionMismatch {
            what: "forget task count",
            expected: 1,
            got: forget.len(),
        });
    }
    let forget_task = &forget[0];

    let input_dim = model.arch().input_dim;
    let expected = forget_task.data.len() * input_dim;
    if ctx.adversarial.inputs.len() != expected {
        return Err(UnlearnError::ContextDimensionMismatch {
            what: "adversarial set",
            expected,
            got: ctx.adversarial.inputs.len(),
        });
    }

    for _ in 0..opt.epochs {
        let forget_batches = shuffled_batches(forget_task.data.len(), opt.batch_size, &mut rng);
        let retain_batches: Vec<(usize, Vec<usize>)> = if co_train_retain {
            retain
                .iter()
                .flat_map(|td| {
                    shuffled_batches(td.data.len(), opt.batch_size, &mut rng)
                        .into_iter()
                        .map(move |idx| (td.task, idx))
                        .collect::<Vec<_>>()
                })
                .collect()
        } else {
            Vec::new()
        };
        for (step, idx) in forget_batches.iter().enumerate() {
            let fbatch = forget_task.data.batch(idx, forget_task.task);
            let abatch = adversarial_batch(&ctx.adversarial, idx, input_dim, forget_task.task);
            let (mut grad, _) = unlearn_grad(&model, &fbatch, &abatch, ctx)?;
            if !retain_batches.is_empty() {
                let (task, ridx) = &retain_batches[step % retain_batches.len()];
                let rtd = retain.iter().find(|td| td.task == *task).expect("task from retain");
                let (rgrad, _) = grad_ce(&model, &rtd.data.batch(ridx, *task))?;
                for (g, r) in grad.iter_mut().zip(&rgrad) {
                    *g += r;
                }
            }
            adam_step(&mut model, &grad, &mut adam, &opt.adam)?;
        }
    }
    Ok(model)
}

/// Slice the index-aligned adversarial set into a batch matching the
/// forget-batch rows.
fn adversarial_batch(adv: &AdversarialSet, indices: &[usize], input_dim: usize, task: usize) -> Batch {
    let mut inputs = Vec::with_capacity(indices.len() * input_dim);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        inputs.extend_from_slice(&adv.inputs[i * input_dim..(i + 1) * input_dim]);
        labels.push(adv.targets[i]);
    }
    Batch { inputs, labels, task }
}

/// Gradient-ascent-only baseline: `epochs` of *negated* cross-entropy
/// descent on the forget data alone.
pub fn plain_ga_update(
    global: &ModelParams,
    forget: &TaskData,
    opt: &LocalOptConfig,
    seed: u64,
) -> Result<ModelParams, UnlearnError> {
    let mut model = global.clone();
    let mut adam = AdamState::new(model.theta().len());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..opt.epochs {
        for idx in shuffled_batches(forget.data.len(), opt.batch_size, &mut rng) {
            let batch = forget.data.batch(&idx, forget.task);
            let (grad, _) = grad_ce(&model, &batch)?;
            let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
            adam_step(&mut model, &ascent, &mut adam, &opt.adam)?;
        }
    }
    Ok(model)
}

/// A named local-update procedure. Every strategy emits a plain parameter
/// vector, so the downstream cluster/encrypt pipeline is strategy-agnostic.
pub trait UnlearnStrategy {
    fn name(&self) -> &'static str;
    fn update(
        &self,
        global: &ModelParams,
        retain: &[TaskData],
        forget: &[TaskData],
        ctx: Option<&UnlearnContext>,
        opt: &LocalOptConfig,
        seed: u64,
    ) -> Result<ModelParams, UnlearnError>;
}

/// The composite-loss strategy (forget + adversarial + drift terms).
pub struct CompositeStrategy {
    /// Co-optimize retained-task cross-entropy per step (task-level mode).
    pub co_train_retain: bool,
}

impl UnlearnStrategy for CompositeStrategy {
    fn name(&self) -> &'static str {
        "composite"
    }

    fn update(
        &self,
        global: &ModelParams,
        retain: &[TaskData],
        forget: &[TaskData],
        ctx: Option<&UnlearnContext>,
        opt: &LocalOptConfig,
        seed: u64,
    ) -> Result<ModelParams, UnlearnError> {
        client_update(global, retain, forget, ctx, self.co_train_retain, opt, seed)
    }
}

/// The negated-cross-entropy baseline strategy.
pub struct GradientAscentStrategy;

impl UnlearnStrategy for GradientAscentStrategy {
    fn name(&self) -> &'static str {
        "gradient-ascent"
    }

    fn update(
        &self,
        global: &ModelParams,
        retain: &[TaskData],
        forget: &[TaskData],
        _ctx: Option<&UnlearnContext>,
        opt: &LocalOptConfig,
        seed: u64,
    ) -> Result<ModelParams, UnlearnError> {
        match forget {
            [] => client_update(global, retain, &[], None, false, opt, seed),
            [single] => plain_ga_update(global, single, opt, seed),
            _ => Err(UnlearnError::ContextDimensionMismatch {
                what: "forget task count",
                expected: 1,
                got: forget.len(),
            }),
        }
    }
}

/// Look up a built-in strategy by its registered name.
pub fn strategy_by_name(name: &str) -> Result<Box<dyn UnlearnStrategy>, UnlearnError> {
    match name {
        "composite" => Ok(Box::new(CompositeStrategy { co_train_retain: false })),
        "composite-cotrain" => Ok(Box::new(CompositeStrategy { co_train_retain: true })),
        "gradient-ascent" => Ok(Box::new(GradientAscentStrategy)),
        other => Err(UnlearnError::UnknownStrategy(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dataset_from_idx, generate_blobs, BlobSpec};
    use crate::nn::ops::test_support::{finite_diff, max_rel_err};
    use crate::nn::ops::{ce_loss, forward};
    use crate::nn::{evaluate_accuracy, init_model, Architecture};

    fn blob_task(classes: u32, per_class: usize, dim_side: u32, seed: u64) -> TaskData {
        let (img, lbl) = generate_blobs(&BlobSpec {
            classes,
            samples_per_class: per_class,
            rows: dim_side,
            cols: dim_side,
            noise: 0.12,
            seed,
        });
        TaskData { task: 0, data: dataset_from_idx(&img, &lbl).unwrap() }
    }

    fn toy_context(model: &ModelParams, forget: &TaskData, seed: u64) -> UnlearnContext {
        build_unlearn_context(
            model,
            forget,
            &PgdConfig { epsilon: 0.5, alpha: 0.25, steps: 3 },
            TermWeights::default(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn sample_wise_split_counts_and_determinism() {
        let td = blob_task(4, 25, 3, 1);
        let spec = ForgetSpec { mode: ForgetMode::SampleWise { gamma_s: 0.1 }, seed: 7 };
        let splits = build_forget_sets(&[vec![td.clone()]], &spec, 4).unwrap();
        let split = &splits[0];
        assert_eq!(split.forget[0].data.len(), 10);
        assert_eq!(split.retain[0].data.len(), 90);
        // Disjoint and exhaustive: histograms add back up.
        let total = td.data.label_histogram();
        let sum: Vec<usize> = split.forget[0]
            .data
            .label_histogram()
            .iter()
            .zip(split.retain[0].data.label_histogram())
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(sum, total);
        let again = build_forget_sets(&[vec![td]], &spec, 4).unwrap();
        assert_eq!(splits, again);
    }

    #[test]
    fn class_wise_split_removes_whole_classes() {
        let td = blob_task(10, 6, 3, 2);
        let spec =
            ForgetSpec { mode: ForgetMode::ClassWise { gamma_c: 0.1, classes: vec![] }, seed: 3 };
        let classes = spec.forgotten_classes(10);
        assert_eq!(classes.len(), 1);
        let split = &build_forget_sets(&[vec![td]], &spec, 10).unwrap()[0];
        let forgotten = classes[0] as usize;
        assert_eq!(split.forget[0].data.label_histogram()[forgotten], 6);
        assert_eq!(split.forget[0].data.len(), 6);
        assert_eq!(split.retain[0].data.label_histogram()[forgotten], 0);
        assert_eq!(split.retain[0].data.len(), 54);

        let explicit =
            ForgetSpec { mode: ForgetMode::ClassWise { gamma_c: 0.2, classes: vec![4, 7] }, seed: 0 };
        assert_eq!(explicit.forgotten_classes(10), vec![4, 7]);
    }

    #[test]
    fn class_wise_without_matching_samples_is_empty_forget_set() {
        let td = blob_task(2, 5, 3, 4); // labels 0 and 1 only
        let spec =
            ForgetSpec { mode: ForgetMode::ClassWise { gamma_c: 0.5, classes: vec![3] }, seed: 0 };
        assert!(matches!(
            build_forget_sets(&[vec![td]], &spec, 4),
            Err(UnlearnError::EmptyForgetSet)
        ));
    }

    #[test]
    fn task_level_split_marks_the_whole_task() {
        let a = TaskData { task: 0, ..blob_task(3, 4, 3, 5) };
        let b = TaskData { task: 1, ..blob_task(3, 4, 3, 6) };
        let spec = ForgetSpec { mode: ForgetMode::TaskLevel { task: 1 }, seed: 0 };
        let split = &build_forget_sets(&[vec![a.clone(), b.clone()]], &spec, 3).unwrap()[0];
        assert_eq!(split.forget, vec![b]);
        assert_eq!(split.retain, vec![a]);
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        for gamma_s in [0.0, -0.5, 1.5] {
            let spec = ForgetSpec { mode: ForgetMode::SampleWise { gamma_s }, seed: 0 };
            assert!(matches!(spec.validate(), Err(UnlearnError::InvalidFraction { .. })));
        }
    }

    #[test]
    fn adversarial_set_pairs_with_forget_set() {
        let td = blob_task(4, 10, 3, 8);
        let arch = Architecture::single_task(9, vec![6], 4);
        let model = init_model(&arch, 1);
        let cfg = PgdConfig { epsilon: 0.5, alpha: 0.25, steps: 3 };
        let adv = gen_adv_forget_set(&model, &td, &cfg, 9).unwrap();
        assert_eq!(adv.inputs.len(), td.data.inputs().len());
        assert_eq!(adv.targets.len(), td.data.len());
        for (t, y) in adv.targets.iter().zip(td.data.labels()) {
            assert_ne!(t, y, "target must differ from the original label");
            assert!(*t < 4);
        }
        assert_eq!(adv, gen_adv_forget_set(&model, &td, &cfg, 9).unwrap());
        assert_ne!(adv.targets, gen_adv_forget_set(&model, &td, &cfg, 10).unwrap().targets);
    }

    #[test]
    fn single_class_task_cannot_take_incorrect_targets() {
        let (img, lbl) = generate_blobs(&BlobSpec {
            classes: 1,
            samples_per_class: 4,
            rows: 2,
            cols: 2,
            noise: 0.1,
            seed: 0,
        });
        let td = TaskData { task: 0, data: dataset_from_idx(&img, &lbl).unwrap() };
        let model = init_model(&Architecture::single_task(4, vec![], 1), 0);
        assert!(matches!(
            gen_adv_forget_set(&model, &td, &PgdConfig::default(), 0),
            Err(UnlearnError::SingleClassTask)
        ));
    }

    /// Frozen oracle: central finite differences of the composite scalar.
    #[test]
    fn composite_gradient_matches_finite_differences() {
        let td = blob_task(3, 4, 2, 11);
        let arch = Architecture::single_task(4, vec![5], 3);
        let model = init_model(&arch, 12);
        let snapshot_model = init_model(&arch, 13); // θ̃ ≠ θ
        let importance: Vec<f64> =
            (0..arch.param_count()).map(|j| (j % 5) as f64 / 4.0).collect();
        let ctx = UnlearnContext::new(
            snapshot_model.theta().to_vec(),
            &importance,
            toy_context(&model, &td, 14).adversarial,
            TermWeights { lambda_forget: 0.7, lambda_adv: 1.3, lambda_drift: 0.4 },
        )
        .unwrap();

        let fbatch = td.data.batch(&(0..td.data.len()).collect::<Vec<_>>(), 0);
        let abatch =
            adversarial_batch(&ctx.adversarial, &(0..td.data.len()).collect::<Vec<_>>(), 4, 0);
        let (grad, _) = unlearn_grad(&model, &fbatch, &abatch, &ctx).unwrap();

        let numeric = finite_diff(
            &model,
            |m| {
                let cf = ce_loss(m, &fbatch).unwrap();
                let ca = ce_loss(m, &abatch).unwrap();
                let drift: f64 = m
                    .theta()
                    .iter()
                    .zip(ctx.theta_snapshot())
                    .zip(ctx.omega_bar())
                    .map(|((t, s), w)| w * (t - s) * (t - s))
                    .sum();
                -0.7 * cf + 1.3 * ca + 0.4 * drift
            },
            1e-4,
        );
        let err = max_rel_err(&grad, &numeric);
        assert!(err <= 1e-3, "max relative error {err}");
    }

    #[test]
    fn drift_gradient_vanishes_at_the_snapshot() {
        let td = blob_task(3, 3, 2, 15);
        let arch = Architecture::single_task(4, vec![4], 3);
        let model = init_model(&arch, 16);
        let adv = toy_context(&model, &td, 17).adversarial;
        let importance = vec![0.25; arch.param_count()];
        // Isolate the drift term: zero out the CE terms.
        let ctx = UnlearnContext::new(
            model.theta().to_vec(), // θ̃ = θ
            &importance,
            adv,
            TermWeights { lambda_forget: 0.0, lambda_adv: 0.0, lambda_drift: 1.0 },
        )
        .unwrap();
        let all = (0..td.data.len()).collect::<Vec<_>>();
        let fbatch = td.data.batch(&all, 0);
        let abatch = adversarial_batch(&ctx.adversarial, &all, 4, 0);
        let (grad, loss) = unlearn_grad(&model, &fbatch, &abatch, &ctx).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0), "drift gradient must vanish at θ = θ̃");
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn term_isolation_recovers_negated_ce_gradient() {
        let td = blob_task(3, 3, 2, 18);
        let arch = Architecture::single_task(4, vec![4], 3);
        let model = init_model(&arch, 19);
        let ctx = UnlearnContext::new(
            init_model(&arch, 20).theta().to_vec(),
            &vec![0.5; arch.param_count()],
            toy_context(&model, &td, 21).adversarial,
            TermWeights { lambda_forget: 1.0, lambda_adv: 0.0, lambda_drift: 0.0 },
        )
        .unwrap();
        let all = (0..td.data.len()).collect::<Vec<_>>();
        let fbatch = td.data.batch(&all, 0);
        let abatch = adversarial_batch(&ctx.adversarial, &all, 4, 0);
        let (grad, _) = unlearn_grad(&model, &fbatch, &abatch, &ctx).unwrap();
        let (g_ce, _) = grad_ce(&model, &fbatch).unwrap();
        for (g, c) in grad.iter().zip(&g_ce) {
            assert_eq!(*g, -c + 0.0, "must equal the negated CE gradient");
        }
    }

    /// Spec'd identity: composite = −g_forget + g_adv + 2ω̄⊙(θ−θ̃) at unit
    /// weights, each term computed separately.
    #[test]
    fn composite_identity_against_separately_computed_terms() {
        let td = blob_task(3, 4, 2, 22);
        let arch = Architecture::single_task(4, vec![5], 3);
        let model = init_model(&arch, 23);
        let snapshot = init_model(&arch, 24).theta().to_vec();
        let importance: Vec<f64> =
            (0..arch.param_count()).map(|j| ((j * 7) % 10) as f64 / 9.0).collect();
        let ctx = UnlearnContext::new(
            snapshot.clone(),
            &importance,
            toy_context(&model, &td, 25).adversarial,
            TermWeights::default(),
        )
        .unwrap();
        let all = (0..td.data.len()).collect::<Vec<_>>();
        let fbatch = td.data.batch(&all, 0);
        let abatch = adversarial_batch(&ctx.adversarial, &all, 4, 0);
        let (grad, _) = unlearn_grad(&model, &fbatch, &abatch, &ctx).unwrap();
        let (gf, _) = grad_ce(&model, &fbatch).unwrap();
        let (ga, _) = grad_ce(&model, &abatch).unwrap();
        for j in 0..grad.len() {
            let expected =
                -gf[j] + ga[j] + 2.0 * (1.0 - importance[j]) * (model.theta()[j] - snapshot[j]);
            assert!((grad[j] - expected).abs() <= 1e-9);
        }
    }

    #[test]
    fn learning_branch_equals_plain_local_training() {
        let td = blob_task(3, 10, 3, 26);
        let arch = Architecture::single_task(9, vec![6], 3);
        let model = init_model(&arch, 27);
        let opt = LocalOptConfig { epochs: 1, batch_size: 8, ..LocalOptConfig::default() };
        let updated =
            client_update(&model, &[td.clone()], &[], None, false, &opt, 99).unwrap();

        // Hand-rolled plain training with the same seed and schedule.
        let mut oracle = model.clone();
        let mut adam = AdamState::new(oracle.theta().len());
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for idx in shuffled_batches(td.data.len(), 8, &mut rng) {
            let (g, _) = grad_ce(&oracle, &td.data.batch(&idx, 0)).unwrap();
            adam_step(&mut oracle, &g, &mut adam, &opt.adam).unwrap();
        }
        assert_eq!(updated.theta(), oracle.theta());
    }

    #[test]
    fn plain_ga_equals_composite_with_zeroed_terms() {
        let td = blob_task(3, 8, 3, 28);
        let arch = Architecture::single_task(9, vec![5], 3);
        let model = init_model(&arch, 29);
        let opt = LocalOptConfig { epochs: 2, batch_size: 6, ..LocalOptConfig::default() };
        let ctx = UnlearnContext::new(
            model.theta().to_vec(),
            &vec![0.3; arch.param_count()],
            toy_context(&model, &td, 30).adversarial,
            TermWeights { lambda_forget: 1.0, lambda_adv: 0.0, lambda_drift: 0.0 },
        )
        .unwrap();
        let composite =
            client_update(&model, &[], &[td.clone()], Some(&ctx), false, &opt, 31).unwrap();
        let ga = plain_ga_update(&model, &td, &opt, 31).unwrap();
        assert_eq!(composite.theta(), ga.theta());
        assert_eq!(composite.theta().len(), model.theta().len());
    }

    /// Desk-scale behavior: unlearning epochs push forget-batch CE up and
    /// forget accuracy down.
    #[test]
    fn unlearning_raises_forget_ce_and_lowers_forget_accuracy() {
        let td = blob_task(4, 15, 3, 32);
        let arch = Architecture::single_task(9, vec![12], 4);
        let mut model = init_model(&arch, 33);
        // Pre-train to competence on the whole set.
        let pretrain = LocalOptConfig { epochs: 40, batch_size: 16, ..LocalOptConfig::default() };
        model = client_update(&model, &[td.clone()], &[], None, false, &pretrain, 34).unwrap();

        let spec =
            ForgetSpec { mode: ForgetMode::ClassWise { gamma_c: 0.25, classes: vec![2] }, seed: 0 };
        let split = &build_forget_sets(&[vec![td.clone()]], &spec, 4).unwrap()[0];
        let forget = &split.forget[0];
        let ctx = build_unlearn_context(
            &model,
            forget,
            &PgdConfig::default(),
            TermWeights::default(),
            35,
        )
        .unwrap();

        let all = (0..forget.data.len()).collect::<Vec<_>>();
        let fbatch = forget.data.batch(&all, 0);
        let ce_before = ce_loss(&model, &fbatch).unwrap();
        let acc_before = evaluate_accuracy(
            &model,
            forget.data.inputs(),
            forget.data.labels(),
            0,
            None,
        )
        .unwrap();
        assert!(acc_before > 0.9, "pre-training failed: forget accuracy {acc_before}");

        let opt = LocalOptConfig { epochs: 5, batch_size: 8, ..LocalOptConfig::default() };
        let unlearned =
            client_update(&model, &split.retain, &split.forget, Some(&ctx), false, &opt, 36)
                .unwrap();
        let ce_after = ce_loss(&unlearned, &fbatch).unwrap();
        let acc_after = evaluate_accuracy(
            &unlearned,
            forget.data.inputs(),
            forget.data.labels(),
            0,
            None,
        )
        .unwrap();
        assert!(ce_after > ce_before, "forget CE should rise: {ce_before} -> {ce_after}");
        assert!(acc_after < acc_before, "forget accuracy should drop: {acc_before} -> {acc_after}");
    }

    #[test]
    fn context_rejects_mismatched_dimensions() {
        let td = blob_task(3, 3, 2, 37);
        let arch = Architecture::single_task(4, vec![4], 3);
        let model = init_model(&arch, 38);
        let adv = toy_context(&model, &td, 39).adversarial;
        assert!(matches!(
            UnlearnContext::new(model.theta().to_vec(), &[0.5; 3], adv, TermWeights::default()),
            Err(UnlearnError::ContextDimensionMismatch { .. })
        ));
    }

    #[test]
    fn strategies_resolve_by_name() {
        assert_eq!(strategy_by_name("composite").unwrap().name(), "composite");
        assert_eq!(strategy_by_name("gradient-ascent").unwrap().name(), "gradient-ascent");
        assert!(matches!(
            strategy_by_name("distillation"),
            Err(UnlearnError::UnknownStrategy(_))
        ));
    }

    #[test]
    fn task_level_co_training_keeps_retained_task_loss_in_check() {
        // Two heads over the same input space; unlearn task 1, retain task 0.
        let arch = Architecture { input_dim: 9, hidden: vec![10], heads: vec![3, 3] };
        let retain_td = blob_task(3, 12, 3, 40);
        let forget_td = TaskData { task: 1, ..blob_task(3, 12, 3, 41) };
        let mut model = init_model(&arch, 42);
        let pretrain = LocalOptConfig { epochs: 30, batch_size: 12, ..LocalOptConfig::default() };
        model = client_update(
            &model,
            &[retain_td.clone(), forget_td.clone()],
            &[],
            None,
            false,
            &pretrain,
            43,
        )
        .unwrap();

        let ctx = build_unlearn_context(
            &model,
            &forget_td,
            &PgdConfig::default(),
            TermWeights::default(),
            44,
        )
        .unwrap();
        let all = (0..retain_td.data.len()).collect::<Vec<_>>();
        let rbatch = retain_td.data.batch(&all, 0);
        let before = ce_loss(&model, &rbatch).unwrap();
        let opt = LocalOptConfig { epochs: 5, batch_size: 8, ..LocalOptConfig::default() };
        let co = client_update(
            &model,
            &[retain_td.clone()],
            &[forget_td.clone()],
            Some(&ctx),
            true,
            &opt,
            45,
        )
        .unwrap();
        let solo = client_update(
            &model,
            &[retain_td.clone()],
            &[forget_td],
            Some(&ctx),
            false,
            &opt,
            45,
        )
        .unwrap();
        let after_co = ce_loss(&co, &rbatch).unwrap();
        let after_solo = ce_loss(&solo, &rbatch).unwrap();
        assert!(
            after_co < after_solo,
            "co-training should protect the retained task: co {after_co}, solo {after_solo}, start {before}"
        );
        // Forward pass on the forgotten head still works (schema unchanged).
        let fwd = forward(&co, &rbatch).unwrap();
        assert_eq!(fwd.probs.len(), rbatch.len() * 3);
    }
}
