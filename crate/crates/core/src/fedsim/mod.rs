//! The federation engine: non-IID partitioning, the per-round protocol
//! (local update → cluster → encrypt → send), server-side secure
//! aggregation over encrypted updates, and the full-retrain counterfactual
//! baseline.
//!
//! Every client sends, per round, the same-shaped triplet — κ encrypted
//! centroids, a serialized centroid-index mapping, and one partial
//! decryption key share bound to `(sum, round, participants)`. The server
//! can recover exactly one thing: the complete round aggregate. Clients
//! scale their parameters by their aggregation weight before encryption
//! (applied to the centroids, which is equivalent), so the decrypted
//! per-coordinate sum *is* the weighted FedAvg mean.

pub mod partition;

pub use partition::partition_dirichlet;

use std::io::Write as _;
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::fe::{
    self, dkey_comb, dkey_share, encrypt_many, keygen, quantize, Ciphertext, ClientId,
    ClientSecretKey, CombineError, DecryptError, EncryptError, EncryptionKey, FunctionId,
    KeyError, PartialDecKey, ParticipantSet, PublicParams, RoundDecryptor, RoundLabel,
    SetupError, ShareError, TrustedBootstrap, WireError,
};
use crate::fe::backend::GroupBackend;
use crate::nn::{
    evaluate_accuracy, init_model, AdamConfig, Architecture, ModelParams, NnError, PgdConfig,
};
use crate::unlearn::{
    build_forget_sets, build_unlearn_context, ForgetMode, ForgetSpec, ForgetSplit, LocalOptConfig,
    strategy_by_name, TaskData, TermWeights, UnlearnContext, UnlearnError, UnlearnStrategy,
};
use crate::wclust::{
    cluster, decode_mapping, encode_mapping, expand, ClusteredUpdate, MappingWireError,
    WclustError,
};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("invalid partition request: {reason}")]
    InvalidPartition { reason: &'static str },
    #[error("dataset too small: {samples} samples for {clients} clients")]
    DatasetTooSmall { clients: usize, samples: usize },
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error("malformed wire update: {0}")]
    WireFormat(&'static str),
    #[error("round mismatch: expected {expected}, got {got}")]
    RoundMismatch { expected: RoundLabel, got: RoundLabel },
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error(transparent)]
    Encrypt(#[from] EncryptError),
    #[error(transparent)]
    Decrypt(#[from] DecryptError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Clustering(#[from] WclustError),
    #[error(transparent)]
    MappingWire(#[from] MappingWireError),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

// ── Configuration ───────────────────────────────────────────────────────

/// All protocol knobs for one federation run. Scalar fields precede the
/// sub-tables so the struct serializes directly to TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    /// N — total clients.
    pub clients: usize,
    /// R — total rounds.
    pub rounds: usize,
    /// E during learning rounds.
    pub local_epochs_learn: usize,
    /// E during unlearning rounds.
    pub local_epochs_unlearn: usize,
    /// ρ — fraction of clients sampled per round.
    pub participation: f64,
    /// κ — clusters per update.
    pub kappa: u16,
    /// N_u — clients designated to unlearn (ignored with no forget spec).
    pub unlearning_clients: usize,
    /// R_u — first unlearning round.
    pub unlearn_start_round: usize,
    /// Unlearning window length in rounds.
    pub unlearn_window: usize,
    /// Dirichlet concentration for the label-skew partition.
    pub dirichlet_alpha: f64,
    pub partition_seed: u64,
    pub training_seed: u64,
    pub crypto_seed: u64,
    /// Registered unlearning strategy name.
    pub strategy: String,
    /// Fixed-point fractional bits.
    pub f_bits: u32,
    /// Per-value plaintext bound, in fixed-point units.
    pub bound: u64,
    pub batch_size: usize,
    /// Compare every secure aggregate against the plaintext oracle and log
    /// the deviation (costs one clear-text aggregation per round).
    pub verify_aggregation: bool,
    /// What to forget; `None` disables unlearning entirely.
    pub forget: Option<ForgetSpec>,
    pub adam: AdamConfig,
    pub pgd: PgdConfig,
    pub unlearn_weights: TermWeights,
    pub architecture: Architecture,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            clients: 10,
            rounds: 60,
            local_epochs_learn: 1,
            local_epochs_unlearn: 5,
            participation: 1.0,
            kappa: 64,
            unlearning_clients: 1,
            unlearn_start_round: 40,
            unlearn_window: 10,
            dirichlet_alpha: 0.1,
            partition_seed: 1,
            training_seed: 2,
            crypto_seed: 3,
            strategy: "composite".to_string(),
            f_bits: 16,
            bound: 1 << 19,
            batch_size: 64,
            verify_aggregation: false,
            forget: None,
            adam: AdamConfig::default(),
            pgd: PgdConfig::default(),
            unlearn_weights: TermWeights::default(),
            architecture: Architecture::single_task(784, vec![256, 128], 4),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        let fail = |msg: String| Err(FedError::InvalidConfig(msg));
        if self.clients < 2 {
            return fail(format!("need at least 2 clients, got {}", self.clients));
        }
        if self.rounds == 0 {
            return fail("need at least 1 round".into());
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return fail(format!("participation must be in (0,1], got {}", self.participation));
        }
        if self.kappa == 0 {
            return fail("kappa must be positive".into());
        }
        if self.batch_size == 0 || self.local_epochs_learn == 0 || self.local_epochs_unlearn == 0 {
            return fail("batch size and epoch counts must be positive".into());
        }
        if let Some(spec) = &self.forget {
            spec.validate().map_err(|e| FedError::InvalidConfig(e.to_string()))?;
            if self.unlearning_clients == 0 || self.unlearning_clients > self.clients {
                return fail(format!(
                    "unlearning clients must be in 1..={}, got {}",
                    self.clients, self.unlearning_clients
                ));
            }
            if self.unlearn_start_round >= self.rounds {
                return fail(format!(
                    "unlearning must start before the last round ({} >= {})",
                    self.unlearn_start_round, self.rounds
                ));
            }
            if self.unlearn_window == 0 {
                return fail("unlearning window must be positive".into());
            }
        }
        Ok(())
    }

    fn opt_config(&self, epochs: usize) -> LocalOptConfig {
        LocalOptConfig { epochs, batch_size: self.batch_size, adam: self.adam }
    }
}

// ── Wire format ─────────────────────────────────────────────────────────

/// One client's complete per-round message: κ encrypted centroids, the
/// serialized index mapping, and the client's key share. The byte schema
/// is identical for learning and unlearning senders.
#[derive(Clone, Debug, PartialEq)]
pub struct WireUpdate<B: GroupBackend> {
    pub round: RoundLabel,
    /// SHA-256 of the 4-byte big-endian sender id.
    pub sender_digest: [u8; 32],
    pub ciphertexts: Vec<Ciphertext<B>>,
    pub key_share: PartialDecKey<B>,
    pub mapping: Vec<u8>,
}

/// Fixed-width sender identifier carried on the wire.
pub fn sender_digest(id: ClientId) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(id.0.to_be_bytes());
    hasher.finalize().into()
}

impl<B: GroupBackend> WireUpdate<B> {
    /// `round ∥ sender digest ∥ κ ciphertexts ∥ key share ∥ mapping`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            8 + 32
                + self.ciphertexts.len() * fe::ciphertext_wire_len::<B>()
                + fe::partial_dec_key_wire_len::<B>()
                + self.mapping.len(),
        );
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.sender_digest);
        for ct in &self.ciphertexts {
            out.extend_from_slice(&ct.to_bytes());
        }
        out.extend_from_slice(&self.key_share.to_bytes());
        out.extend_from_slice(&self.mapping);
        out
    }

    pub fn from_bytes(bytes: &[u8], kappa: u16) -> Result<Self, FedError> {
        let ct_len = fe::ciphertext_wire_len::<B>();
        let share_len = fe::partial_dec_key_wire_len::<B>();
        let fixed = 8 + 32 + kappa as usize * ct_len + share_len;
        if bytes.len() < fixed {
            return Err(FedError::WireFormat("update shorter than fixed fields"));
        }
        let round = RoundLabel::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
        let mut sender_digest = [0u8; 32];
        sender_digest.copy_from_slice(&bytes[8..40]);
        let mut ciphertexts = Vec::with_capacity(kappa as usize);
        let mut at = 40;
        for _ in 0..kappa {
            let ct = Ciphertext::<B>::from_bytes(&bytes[at..at + ct_len])?;
            if ct.round() != round {
                return Err(FedError::WireFormat("ciphertext label disagrees with header"));
            }
            ciphertexts.push(ct);
            at += ct_len;
        }
        let key_share = PartialDecKey::<B>::from_bytes(&bytes[at..at + share_len])?;
        at += share_len;
        Ok(WireUpdate {
            round,
            sender_digest,
            ciphertexts,
            key_share,
            mapping: bytes[at..].to_vec(),
        })
    }
}

// ── Client-side round work ──────────────────────────────────────────────

/// Deterministic per-(round, client) seed streams.
fn mix_seed(base: u64, round: u64, client: u32, stream: u64) -> u64 {
    let mut h = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h = (h ^ round.wrapping_mul(0xBF58_476D_1CE4_E5B9)).rotate_left(23);
    h = (h ^ (client as u64).wrapping_mul(0x94D0_49BB_1331_11EB)).rotate_left(29);
    h.wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

pub fn clustering_seed(training_seed: u64, round: u64, client: u32) -> u64 {
    mix_seed(training_seed, round, client, 0xC3)
}

pub fn update_seed(training_seed: u64, round: u64, client: u32) -> u64 {
    mix_seed(training_seed, round, client, 0xA5)
}

fn sampling_seed(training_seed: u64, round: u64) -> u64 {
    mix_seed(training_seed, round, u32::MAX, 0x51)
}

/// Compress, cluster, scale, quantize, and encrypt one locally updated
/// parameter vector, and derive the round's key share.
pub fn encrypt_local_update<B: GroupBackend>(
    local_theta: &[f64],
    weight: f64,
    secret: &ClientSecretKey,
    encryption: &EncryptionKey,
    round: RoundLabel,
    participants: &ParticipantSet,
    kappa: u16,
    clustering_seed: u64,
    pp: &PublicParams<B>,
) -> Result<(WireUpdate<B>, ClusteredUpdate), FedError> {
    let clustered = cluster(local_theta, kappa, clustering_seed)?;
    let quantized: Vec<_> =
        clustered.centroids().iter().map(|c| quantize(weight * c, pp)).collect();
    let ciphertexts = encrypt_many(encryption, &quantized, round, pp)?;
    let key_share = dkey_share(secret, &FunctionId::sum(), round, participants, pp)?;
    let mapping = encode_mapping(clustered.kappa(), clustered.mapping())?;
    let wire = WireUpdate {
        round,
        sender_digest: sender_digest(secret.id()),
        ciphertexts,
        key_share,
        mapping,
    };
    Ok((wire, clustered))
}

// ── Server-side aggregation ─────────────────────────────────────────────

/// Decrypt the round's aggregated parameter vector from one complete
/// update per participant.
///
/// The combined key only exists over the full participant set, and each
/// coordinate's ciphertext tuple must contain exactly one ciphertext per
/// participant under this round's label — any omission or substitution
/// surfaces as [`DecryptError::DecryptionFailure`] (or a typed combine
/// error where bookkeeping catches it first).
pub fn secure_aggregate<B: GroupBackend>(
    updates: &[WireUpdate<B>],
    participants: &ParticipantSet,
    round: RoundLabel,
    dim: usize,
    pp: &PublicParams<B>,
) -> Result<Vec<f64>, FedError> {
    for u in updates {
        if u.round != round {
            return Err(FedError::RoundMismatch { expected: round, got: u.round });
        }
    }
    let shares: Vec<_> = updates.iter().map(|u| u.key_share.clone()).collect();
    let dk = dkey_comb(&shares, participants)?;

    let mut mappings = Vec::with_capacity(updates.len());
    for u in updates {
        let (kappa, mapping) = decode_mapping(&u.mapping)?;
        if mapping.len() != dim {
            return Err(FedError::WireFormat("mapping dimension disagrees with model"));
        }
        if u.ciphertexts.len() != kappa as usize {
            return Err(FedError::WireFormat("ciphertext count disagrees with mapping"));
        }
        mappings.push(mapping);
    }

    let decryptor = RoundDecryptor::new(&dk, round, pp);
    let mut theta = Vec::with_capacity(dim);
    let mut tuple = Vec::with_capacity(updates.len());
    for j in 0..dim {
        tuple.clear();
        for (u, mapping) in updates.iter().zip(&mappings) {
            tuple.push(u.ciphertexts[mapping[j] as usize].clone());
        }
        let sum = decryptor.decrypt_sum(&tuple)?;
        theta.push(fe::dequantize(sum, pp));
    }
    Ok(theta)
}

/// Test oracle: the same weighted aggregate computed entirely in the
/// clear, `Σ_i w_i · expand(cluster(θ_i, κ))`, with the caller supplying
/// the per-client clustering seeds used on the secure path.
pub fn plaintext_fedavg_oracle(
    locals: &[Vec<f64>],
    weights: &[f64],
    kappa: u16,
    seeds: &[u64],
) -> Result<Vec<f64>, FedError> {
    if locals.is_empty() || locals.len() != weights.len() || locals.len() != seeds.len() {
        return Err(FedError::InvalidConfig("oracle needs one weight and seed per model".into()));
    }
    let dim = locals[0].len();
    let mut theta = vec![0.0; dim];
    for ((local, &w), &seed) in locals.iter().zip(weights).zip(seeds) {
        let clustered = cluster(local, kappa, seed)?;
        let expanded = expand(clustered.centroids(), clustered.mapping())?;
        for (t, e) in theta.iter_mut().zip(&expanded) {
            *t += w * e;
        }
    }
    Ok(theta)
}

/// DEFLATE-compressed length of a payload (the size that would cross the
/// wire with transport compression).
pub fn deflate_len(bytes: &[u8]) -> usize {
    let mut encoder =
        flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
    encoder.write_all(bytes).expect("in-memory write");
    encoder.finish().expect("in-memory finish").len()
}

// ── Round log ───────────────────────────────────────────────────────────

/// One round's record. Serialized as JSON lines; everything except
/// `wall_ms` is bit-reproducible under fixed seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub participants: Vec<u32>,
    pub unlearning_participants: Vec<u32>,
    /// Per-participant local wall time (ms) — timing only, excluded from
    /// determinism guarantees.
    pub wall_ms: Vec<f64>,
    /// Per-participant field sizes of the serialized update, in bytes.
    pub ciphertext_bytes: Vec<u64>,
    pub key_share_bytes: Vec<u64>,
    pub mapping_bytes: Vec<u64>,
    /// Per-participant DEFLATE-compressed size of the whole update.
    pub payload_deflate_bytes: Vec<u64>,
    /// Hex SHA-256 of the aggregated model (little-endian f64 bytes).
    pub global_digest: String,
    /// Test accuracy over retained classes (all classes when nothing is
    /// forgotten).
    pub acc_retained: f64,
    /// Test accuracy over forgotten classes (class-wise modes only).
    pub acc_forgotten: Option<f64>,
    /// Max componentwise |secure − plaintext oracle|, when verification is
    /// enabled.
    pub aggregation_deviation: Option<f64>,
}

/// Hex SHA-256 over the little-endian f64 bytes of θ.
pub fn model_digest(model: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    for v in model.theta() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

// ── Federation driver ───────────────────────────────────────────────────

/// Everything a finished run exposes to analysis and tests.
#[derive(Clone, Debug)]
pub struct FederationRun {
    pub final_model: ModelParams,
    pub logs: Vec<RoundLog>,
    /// θ after every round in order (drives the drift analysis).
    pub model_history: Vec<Vec<f64>>,
    /// Classes removed by a class-wise forget spec (empty otherwise).
    pub forgotten_classes: Vec<u32>,
    /// Ids of the clients designated to unlearn.
    pub unlearning_clients: Vec<u32>,
    /// Global model entering the first unlearning round.
    pub model_at_unlearn_start: Option<ModelParams>,
}

struct ClientHarness {
    id: ClientId,
    secret: ClientSecretKey,
    encryption: EncryptionKey,
    /// Original local data (trained on before the unlearning request).
    all: Vec<TaskData>,
    retain: Vec<TaskData>,
    forget: Vec<TaskData>,
    ctx: Option<UnlearnContext>,
    designated: bool,
    active: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    /// Training on the full local dataset (before any unlearning request).
    PreRequest,
    /// Inside the unlearning window (designated clients unlearn).
    Window,
    /// After the window: forget data deleted, retain data only.
    PostWindow,
}

impl ClientHarness {
    fn round_data(&self, phase: Phase) -> &[TaskData] {
        match phase {
            Phase::PreRequest => &self.all,
            Phase::Window | Phase::PostWindow => {
                if self.designated {
                    &self.retain
                } else {
                    &self.all
                }
            }
        }
    }

    /// Aggregation-weight basis: the client's current dataset size.
    fn weight_basis(&self, phase: Phase) -> usize {
        let mut n: usize = self.round_data(phase).iter().map(|td| td.data.len()).sum();
        if self.designated && phase == Phase::Window {
            // Still holds the forget data while unlearning it.
            n += self.forget.iter().map(|td| td.data.len()).sum::<usize>();
        }
        n
    }
}

/// Designate the `n_u` clients with the most forget-matching samples
/// (ties toward lower id) — the holders of the data to be unlearned.
fn designate_unlearning_clients(
    parts: &[Dataset],
    spec: &ForgetSpec,
    num_classes: u32,
    n_u: usize,
) -> Vec<usize> {
    let score = |d: &Dataset| -> usize {
        match &spec.mode {
            ForgetMode::SampleWise { .. } => d.len(),
            ForgetMode::ClassWise { .. } => {
                d.indices_with_labels(&spec.forgotten_classes(num_classes)).len()
            }
            // Single-task driver: every client's data belongs to task 0.
            ForgetMode::TaskLevel { task } => {
                if *task == 0 {
                    d.len()
                } else {
                    0
                }
            }
        }
    };
    let mut ranked: Vec<(usize, usize)> =
        parts.iter().map(score).enumerate().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked.into_iter().take(n_u).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    chosen
}

fn pick_participants(
    active: &[u32],
    forced: &[u32],
    rho: f64,
    seed: u64,
) -> Vec<u32> {
    let k = ((rho * active.len() as f64).round() as usize).clamp(1, active.len());
    let mut picked: Vec<u32> = forced.to_vec();
    let pool: Vec<u32> = active.iter().copied().filter(|id| !forced.contains(id)).collect();
    if picked.len() < k && !pool.is_empty() {
        let extra = (k - picked.len()).min(pool.len());
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        for idx in rand::seq::index::sample(&mut rng, pool.len(), extra) {
            picked.push(pool[idx]);
        }
    }
    picked.sort_unstable();
    picked
}

/// Run the full encrypted-federation protocol.
pub fn run_federation<B: GroupBackend>(
    config: &FederationConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<FederationRun, FedError> {
    config.validate()?;
    let dim = config.architecture.param_count();
    let num_classes = train.num_classes();

    // Partition and designate.
    let parts = partition_dirichlet(train, config.clients, config.dirichlet_alpha, config.partition_seed)?;
    let (designated, forgotten_classes) = match &config.forget {
        Some(spec) => (
            designate_unlearning_clients(&parts, spec, num_classes, config.unlearning_clients),
            if matches!(spec.mode, ForgetMode::ClassWise { .. }) {
                spec.forgotten_classes(num_classes)
            } else {
                Vec::new()
            },
        ),
        None => (Vec::new(), Vec::new()),
    };

    // Key material.
    let pp = fe::setup::<B>(256, config.clients as u32, config.f_bits, &BigUint::from(config.bound))?;
    let mut bootstrap = TrustedBootstrap::new(config.clients as u32, config.crypto_seed);

    let mut clients = Vec::with_capacity(config.clients);
    for (i, part) in parts.into_iter().enumerate() {
        let id = ClientId(i as u32);
        let (secret, encryption) = keygen(&pp, id, &mut bootstrap)?;
        let all = vec![TaskData { task: 0, data: part }];
        let is_designated = designated.contains(&i);
        let (retain, forget) = if is_designated {
            let spec = config.forget.as_ref().expect("designated implies spec");
            let split: ForgetSplit =
                build_forget_sets(&[all.clone()], spec, num_classes)?.remove(0);
            (split.retain, split.forget)
        } else {
            (all.clone(), Vec::new())
        };
        clients.push(ClientHarness {
            id,
            secret,
            encryption,
            all,
            retain,
            forget,
            ctx: None,
            designated: is_designated,
            active: true,
        });
    }

    // Strategy; task-level unlearning co-optimizes the retained task.
    let strategy: Box<dyn UnlearnStrategy> = {
        let name = match (&config.forget, config.strategy.as_str()) {
            (Some(ForgetSpec { mode: ForgetMode::TaskLevel { .. }, .. }), "composite") => {
                "composite-cotrain"
            }
            _ => config.strategy.as_str(),
        };
        strategy_by_name(name).map_err(|e| FedError::InvalidConfig(e.to_string()))?
    };

    let window_end = config.unlearn_start_round + config.unlearn_window;
    let retained_classes: Vec<u32> =
        (0..num_classes).filter(|c| !forgotten_classes.contains(c)).collect();

    let mut global = init_model(&config.architecture, config.training_seed);
    let mut logs = Vec::with_capacity(config.rounds);
    let mut model_history = Vec::with_capacity(config.rounds);
    let mut model_at_unlearn_start = None;

    for round in 0..config.rounds {
        let phase = if config.forget.is_none() || round < config.unlearn_start_round {
            Phase::PreRequest
        } else if round < window_end {
            Phase::Window
        } else {
            Phase::PostWindow
        };
        let in_window = phase == Phase::Window;

        // Post-window: designated clients without retained data drop out.
        if config.forget.is_some() && round == window_end {
            for c in clients.iter_mut() {
                if c.designated && c.retain.is_empty() {
                    c.active = false;
                }
            }
        }

        // Unlearning context is snapshotted once, entering round R_u.
        if in_window && round == config.unlearn_start_round {
            model_at_unlearn_start = Some(global.clone());
            for c in clients.iter_mut() {
                if c.designated && c.ctx.is_none() {
                    let forget0 = c.forget.first().expect("designated client has forget data");
                    c.ctx = Some(build_unlearn_context(
                        &global,
                        forget0,
                        &config.pgd,
                        config.unlearn_weights,
                        mix_seed(config.training_seed, round as u64, c.id.0, 0x7D),
                    )?);
                }
            }
        }

        let active: Vec<u32> =
            clients.iter().filter(|c| c.active).map(|c| c.id.0).collect();
        if active.is_empty() {
            return Err(FedError::InvalidConfig("every client dropped out".into()));
        }
        let forced: Vec<u32> = if in_window {
            clients
                .iter()
                .filter(|c| c.active && c.designated)
                .map(|c| c.id.0)
                .collect()
        } else {
            Vec::new()
        };
        let participants = pick_participants(
            &active,
            &forced,
            config.participation,
            sampling_seed(config.training_seed, round as u64),
        );
        let pset = ParticipantSet::new(participants.iter().map(|&id| ClientId(id)));
        let label = round as RoundLabel;

        let total_basis: usize = participants
            .iter()
            .map(|&id| clients[id as usize].weight_basis(phase))
            .sum();

        let mut wires = Vec::with_capacity(participants.len());
        let mut locals = Vec::with_capacity(participants.len());
        let mut weights = Vec::with_capacity(participants.len());
        let mut cluster_seeds = Vec::with_capacity(participants.len());
        let mut wall_ms = Vec::with_capacity(participants.len());
        let mut unlearning_participants = Vec::new();

        for &id in &participants {
            let c = &clients[id as usize];
            let unlearning_now = in_window && c.designated;
            let started = Instant::now();

            let epochs = if unlearning_now {
                config.local_epochs_unlearn
            } else {
                config.local_epochs_learn
            };
            let opt = config.opt_config(epochs);
            let seed = update_seed(config.training_seed, label, id);
            let local = if unlearning_now {
                unlearning_participants.push(id);
                strategy.update(&global, &c.retain, &c.forget, c.ctx.as_ref(), &opt, seed)?
            } else {
                strategy.update(&global, c.round_data(phase), &[], None, &opt, seed)?
            };

            let weight = c.weight_basis(phase) as f64 / total_basis as f64;
            let cseed = clustering_seed(config.training_seed, label, id);
            let (wire, _) = encrypt_local_update(
                local.theta(),
                weight,
                &c.secret,
                &c.encryption,
                label,
                &pset,
                config.kappa,
                cseed,
                &pp,
            )?;
            wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
            wires.push(wire);
            locals.push(local.theta().to_vec());
            weights.push(weight);
            cluster_seeds.push(cseed);
        }

        let theta_next = secure_aggregate(&wires, &pset, label, dim, &pp)?;
        let aggregation_deviation = if config.verify_aggregation {
            let oracle =
                plaintext_fedavg_oracle(&locals, &weights, config.kappa, &cluster_seeds)?;
            Some(
                theta_next
                    .iter()
                    .zip(&oracle)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            )
        } else {
            None
        };
        global.set_theta(theta_next)?;

        let acc_retained = evaluate_accuracy(
            &global,
            test.inputs(),
            test.labels(),
            0,
            if forgotten_classes.is_empty() { None } else { Some(&retained_classes) },
        )?;
        let acc_forgotten = if forgotten_classes.is_empty() {
            None
        } else {
            Some(evaluate_accuracy(
                &global,
                test.inputs(),
                test.labels(),
                0,
                Some(&forgotten_classes),
            )?)
        };

        logs.push(RoundLog {
            round: label,
            participants: participants.clone(),
            unlearning_participants,
            wall_ms,
            ciphertext_bytes: wires
                .iter()
                .map(|w| (w.ciphertexts.len() * fe::ciphertext_wire_len::<B>()) as u64)
                .collect(),
            key_share_bytes: wires
                .iter()
                .map(|_| fe::partial_dec_key_wire_len::<B>() as u64)
                .collect(),
            mapping_bytes: wires.iter().map(|w| w.mapping.len() as u64).collect(),
            payload_deflate_bytes: wires
                .iter()
                .map(|w| deflate_len(&w.to_bytes()) as u64)
                .collect(),
            global_digest: model_digest(&global),
            acc_retained,
            acc_forgotten,
            aggregation_deviation,
        });
        model_history.push(global.theta().to_vec());
    }

    Ok(FederationRun {
        final_model: global,
        logs,
        model_history,
        forgotten_classes,
        unlearning_clients: designated.iter().map(|&i| i as u32).collect(),
        model_at_unlearn_start,
    })
}

/// The counterfactual: retrain from scratch with the designated clients'
/// forget data removed up front — plaintext FedAvg, no clustering, no
/// crypto — under the same partition and seeds.
pub fn full_retrain_baseline(
    config: &FederationConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<FederationRun, FedError> {
    config.validate()?;
    let num_classes = train.num_classes();
    let parts = partition_dirichlet(train, config.clients, config.dirichlet_alpha, config.partition_seed)?;
    let (designated, forgotten_classes) = match &config.forget {
        Some(spec) => (
            designate_unlearning_clients(&parts, spec, num_classes, config.unlearning_clients),
            if matches!(spec.mode, ForgetMode::ClassWise { .. }) {
                spec.forgotten_classes(num_classes)
            } else {
                Vec::new()
            },
        ),
        None => (Vec::new(), Vec::new()),
    };

    // Remove the forget sets; clients left with nothing never participate.
    let mut locals_data: Vec<Vec<TaskData>> = Vec::with_capacity(config.clients);
    for (i, part) in parts.into_iter().enumerate() {
        let all = vec![TaskData { task: 0, data: part }];
        if designated.contains(&i) {
            let spec = config.forget.as_ref().expect("designated implies spec");
            let split = build_forget_sets(&[all], spec, num_classes)?.remove(0);
            locals_data.push(split.retain);
        } else {
            locals_data.push(all);
        }
    }

    let retained_classes: Vec<u32> =
        (0..num_classes).filter(|c| !forgotten_classes.contains(c)).collect();
    let mut global = init_model(&config.architecture, config.training_seed);
    let mut logs = Vec::with_capacity(config.rounds);
    let mut model_history = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let active: Vec<u32> = locals_data
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.is_empty())
            .map(|(i, _)| i as u32)
            .collect();
        let participants = pick_participants(
            &active,
            &[],
            config.participation,
            sampling_seed(config.training_seed, round as u64),
        );
        let label = round as RoundLabel;
        let total_basis: usize = participants
            .iter()
            .map(|&id| locals_data[id as usize].iter().map(|td| td.data.len()).sum::<usize>())
            .sum();

        let mut theta_next = vec![0.0; config.architecture.param_count()];
        let mut wall_ms = Vec::with_capacity(participants.len());
        let opt = config.opt_config(config.local_epochs_learn);
        for &id in &participants {
            let started = Instant::now();
            let data = &locals_data[id as usize];
            let local = crate::unlearn::client_update(
                &global,
                data,
                &[],
                None,
                false,
                &opt,
                update_seed(config.training_seed, label, id),
            )?;
            let n: usize = data.iter().map(|td| td.data.len()).sum();
            let w = n as f64 / total_basis as f64;
            for (t, l) in theta_next.iter_mut().zip(local.theta()) {
                *t += w * l;
            }
            wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
        }
        global.set_theta(theta_next)?;

        let acc_retained = evaluate_accuracy(
            &global,
            test.inputs(),
            test.labels(),
            0,
            if forgotten_classes.is_empty() { None } else { Some(&retained_classes) },
        )?;
        let acc_forgotten = if forgotten_classes.is_empty() {
            None
        } else {
            Some(evaluate_accuracy(
                &global,
                test.inputs(),
                test.labels(),
                0,
                Some(&forgotten_classes),
            )?)
        };
        logs.push(RoundLog {
            round: label,
            participants: participants.clone(),
            unlearning_participants: Vec::new(),
            wall_ms,
            ciphertext_bytes: Vec::new(),
            key_share_bytes: Vec::new(),
            mapping_bytes: Vec::new(),
            payload_deflate_bytes: Vec::new(),
            global_digest: model_digest(&global),
            acc_retained,
            acc_forgotten,
            aggregation_deviation: None,
        });
        model_history.push(global.theta().to_vec());
    }

    Ok(FederationRun {
        final_model: global,
        logs,
        model_history,
        forgotten_classes,
        unlearning_clients: designated.iter().map(|&i| i as u32).collect(),
        model_at_unlearn_start: None,
    })
}
