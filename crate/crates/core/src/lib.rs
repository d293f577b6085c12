//! Federated learning with encrypted, clustered model updates and
//! client-side unlearning.
//!
//! The crate simulates a federation in which clients never reveal plaintext
//! parameters to the server. Each round, every participating client
//!
//! 1. trains (or unlearns) locally,
//! 2. compresses its parameter vector into `κ` centroids plus a per-parameter
//!    index map ([`wclust`]),
//! 3. quantizes the centroids to fixed point and encrypts them under a
//!    decentralized multi-client functional-encryption scheme bound to the
//!    round label ([`fe`]), and
//! 4. ships ciphertexts, index map, and its share of the round's functional
//!    decryption key to the server ([`fedsim`]).
//!
//! The server can combine the shares into exactly one key: the one that
//! reveals the complete weighted sum over *all* round participants. Dropping,
//! substituting, or replaying any ciphertext or key share leaves nothing but
//! garbage in the target group, so selective aggregation fails closed.
//! Because unlearning clients emit byte-identical update schemas, the server
//! also cannot tell who is forgetting what.
//!
//! ```text
//!             client i                                server
//!   ┌────────────────────────────┐        ┌───────────────────────────────┐
//!   │ train / unlearn  (nn,      │        │ collect one update per        │
//!   │   unlearn)                 │        │   participant                 │
//!   │ cluster θ → (Z, P) (wclust)│  wire  │ combine key shares → dk_f     │
//!   │ quantize + encrypt Z  (fe) │ ─────► │ expand ciphertexts via P      │
//!   │ derive key share dk_i (fe) │        │ decrypt per index → θ^{r+1}   │
//!   └────────────────────────────┘        └───────────────────────────────┘
//! ```
//!
//! [`analysis`] post-processes run logs: unlearning efficacy (prediction gap
//! against a full-retrain counterfactual), parameter drift, communication
//! size, timing, and the structural indistinguishability checks. [`cli`]
//! exposes the whole pipeline as `datagen` / `run` / `analyze` subcommands
//! driven by a TOML config.
//!
//! All randomness flows through explicit seeds; two runs with the same
//! configuration produce bit-identical models and logs (wall-clock timing
//! fields excepted).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod data;
pub mod fe;
pub mod fedsim;
pub mod nn;
pub mod unlearn;
pub mod wclust;
