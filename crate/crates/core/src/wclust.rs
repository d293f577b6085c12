//! K-means weight clustering: compresses a flat parameter vector into κ
//! centroids plus a per-parameter index mapping, and the inverse expansion.
//!
//! Clients cluster their trained parameters with one whole-model codebook,
//! encrypt only the κ centroids, and ship the (index-only) mapping in the
//! clear. The server expands by indexing — which works identically whether
//! the centroids are plaintext reals or ciphertext handles — so the
//! aggregate is reconstructed coordinate-by-coordinate without ever seeing
//! a client's parameter values.
//!
//! Determinism contract: for a given `(θ, κ, seed)` the result is
//! bit-reproducible. Seeding is k-means++ driven by a ChaCha stream;
//! Lloyd iterations alternate nearest-centroid assignment (ties to the
//! lower centroid index) and mean updates (accumulated in parameter-index
//! order), stopping when the clustering objective improves by less than
//! `1e-6` or after 100 iterations. Empty clusters are repaired by donating
//! the point farthest from its current centroid (ties to the lower
//! parameter index; only clusters with ≥ 2 members donate).
//!
//! The assignment step is accelerated by a sorted-centroid binary search,
//! deliberately constructed to reproduce the naive linear scan *exactly*:
//! the two bracketing centroid values are compared by the same squared
//! distance the scan would compute, equal centroid values collapse to
//! their lowest original index, and equal squared distances break toward
//! the lower index.

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Convergence threshold on the absolute objective improvement.
const OBJECTIVE_TOLERANCE: f64 = 1e-6;
/// Iteration cap for the Lloyd loop.
const MAX_ITERATIONS: usize = 100;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WclustError {
    #[error("kappa {kappa} exceeds the parameter dimension {dim}")]
    KappaExceedsDimension { kappa: u16, dim: usize },
    #[error("kappa must be at least 1")]
    ZeroKappa,
    #[error("mapping entry {entry} at position {position} is out of range for {kappa} centroids")]
    MappingOutOfRange { entry: u16, position: usize, kappa: usize },
    #[error("dimension mismatch: parameter vector has {theta} entries, mapping has {mapping}")]
    DimensionMismatch { theta: usize, mapping: usize },
    #[error("parameter vector contains a non-finite value at index {0}")]
    NonFiniteInput(usize),
    #[error("dimension {0} exceeds the 32-bit wire limit")]
    DimensionTooLarge(usize),
}

/// Errors decoding a serialized mapping payload.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MappingWireError {
    #[error("mapping payload: expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("mapping payload shorter than its 6-byte header")]
    TruncatedHeader,
    #[error("mapping payload declares zero centroids")]
    ZeroKappa,
    #[error("mapping entry {entry} at position {position} is out of range for {kappa} centroids")]
    EntryOutOfRange { entry: u16, position: usize, kappa: u16 },
    #[error("nonzero padding bits in final mapping byte")]
    NonZeroPadding,
}

/// A clustered parameter vector: κ centroid values and, for every original
/// parameter, the index of the centroid that replaces it.
///
/// Invariants (enforced at construction): at least one centroid, every
/// mapping entry indexes a valid centroid, and κ ≤ d.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteredUpdate {
    centroids: Vec<f64>,
    mapping: Vec<u16>,
}

impl ClusteredUpdate {
    pub fn new(centroids: Vec<f64>, mapping: Vec<u16>) -> Result<Self, WclustError> {
        if centroids.is_empty() {
            return Err(WclustError::ZeroKappa);
        }
        if centroids.len() > mapping.len() {
            return Err(WclustError::KappaExceedsDimension {
                kappa: centroids.len() as u16,
                dim: mapping.len(),
            });
        }
        for (position, &entry) in mapping.iter().enumerate() {
            if usize::from(entry) >= centroids.len() {
                return Err(WclustError::MappingOutOfRange {
                    entry,
                    position,
                    kappa: centroids.len(),
                });
            }
        }
        Ok(ClusteredUpdate { centroids, mapping })
    }

    /// Original parameter dimension `d`.
    pub fn dim(&self) -> usize {
        self.mapping.len()
    }

    /// Codebook size κ.
    pub fn kappa(&self) -> u16 {
        self.centroids.len() as u16
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn mapping(&self) -> &[u16] {
        &self.mapping
    }

    /// Reconstruct the d-dimensional vector: `out[j] = Z[P[j]]`.
    pub fn expand(&self) -> Vec<f64> {
        self.mapping.iter().map(|&p| self.centroids[usize::from(p)]).collect()
    }
}

/// Expand a mapping over any indexable codebook — plaintext centroid reals
/// or ciphertext handles alike, since only indexing is involved.
pub fn expand<T: Clone>(centroids: &[T], mapping: &[u16]) -> Result<Vec<T>, WclustError> {
    mapping
        .iter()
        .enumerate()
        .map(|(position, &entry)| {
            centroids.get(usize::from(entry)).cloned().ok_or(WclustError::MappingOutOfRange {
                entry,
                position,
                kappa: centroids.len(),
            })
        })
        .collect()
}

/// The clustering objective: the sum of squared distances between each
/// parameter and its assigned centroid.
pub fn wc_objective(theta: &[f64], update: &ClusteredUpdate) -> Result<f64, WclustError> {
    if theta.len() != update.dim() {
        return Err(WclustError::DimensionMismatch { theta: theta.len(), mapping: update.dim() });
    }
    Ok(objective(theta, &update.centroids, &update.mapping))
}

fn objective(theta: &[f64], centroids: &[f64], mapping: &[u16]) -> f64 {
    let mut total = 0.0;
    for (x, &p) in theta.iter().zip(mapping) {
        let diff = x - centroids[usize::from(p)];
        total += diff * diff;
    }
    total
}

/// Seeded k-means++ initialization: the first centroid is a uniformly
/// chosen parameter; each further centroid is a parameter sampled with
/// probability proportional to its squared distance from the nearest
/// already-chosen centroid. If every remaining distance is zero (fewer
/// distinct values than κ), the next centroid falls back to a uniform draw.
pub fn kmeans_plus_plus_init(theta: &[f64], kappa: u16, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(usize::from(kappa));
    centroids.push(theta[rng.random_range(0..theta.len())]);
    let mut nearest_sq: Vec<f64> = theta
        .iter()
        .map(|x| {
            let diff = x - centroids[0];
            diff * diff
        })
        .collect();
    while centroids.len() < usize::from(kappa) {
        let next = match WeightedIndex::new(nearest_sq.iter().copied()) {
            Ok(dist) => theta[dist.sample(&mut rng)],
            // All weights zero: every parameter already coincides with a
            // centroid. Duplicate centroids are fine — the empty-cluster
            // repair in the Lloyd loop redistributes them.
            Err(_) => theta[rng.random_range(0..theta.len())],
        };
        centroids.push(next);
        for (near, x) in nearest_sq.iter_mut().zip(theta) {
            let diff = x - next;
            let d2 = diff * diff;
            if d2 < *near {
                *near = d2;
            }
        }
    }
    centroids
}

/// Cluster a flat parameter vector into κ centroids with a single
/// whole-model codebook.
///
/// Runs seeded k-means++ initialization followed by Lloyd iterations until
/// the objective improves by less than `1e-6` or 100 iterations elapse.
/// The objective is non-increasing across iterations (up to floating-point
/// rounding); the converged objective equals the squared reconstruction
/// error of [`ClusteredUpdate::expand`] exactly, because both evaluate the
/// same sum in the same order.
pub fn cluster(theta: &[f64], kappa: u16, seed: u64) -> Result<ClusteredUpdate, WclustError> {
    Ok(cluster_with_trace(theta, kappa, seed)?.0)
}

/// [`cluster`], additionally returning the per-iteration objective values
/// (one entry per completed Lloyd iteration) for monotonicity checks and
/// convergence diagnostics.
pub fn cluster_with_trace(
    theta: &[f64],
    kappa: u16,
    seed: u64,
) -> Result<(ClusteredUpdate, Vec<f64>), WclustError> {
    if kappa == 0 {
        return Err(WclustError::ZeroKappa);
    }
    if usize::from(kappa) > theta.len() {
        return Err(WclustError::KappaExceedsDimension { kappa, dim: theta.len() });
    }
    if let Some(bad) = theta.iter().position(|x| !x.is_finite()) {
        return Err(WclustError::NonFiniteInput(bad));
    }

    let mut centroids = kmeans_plus_plus_init(theta, kappa, seed);
    let mut mapping = vec![0u16; theta.len()];
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        assign_nearest(theta, &centroids, &mut mapping);
        repair_empty_clusters(theta, &centroids, &mut mapping);
        update_means(theta, &mapping, &mut centroids);
        let current = objective(theta, &centroids, &mapping);
        debug_assert!(
            current <= previous || (current - previous) <= 1e-9 * previous.abs().max(1.0),
            "Lloyd objective increased: {previous} -> {current}"
        );
        trace.push(current);
        if previous - current < OBJECTIVE_TOLERANCE {
            break;
        }
        previous = current;
    }
    Ok((ClusteredUpdate { centroids, mapping }, trace))
}

/// Nearest-centroid assignment, accelerated by binary search over the
/// sorted distinct centroid values but exactly equivalent to the linear
/// scan "strictly smaller squared distance wins, ties go to the lower
/// centroid index": only a bracketing value can achieve the minimum
/// distance, duplicates of a value share its lowest original index, and
/// the final bracket comparison uses the scan's own arithmetic.
fn assign_nearest(theta: &[f64], centroids: &[f64], mapping: &mut [u16]) {
    // Sorted distinct centroid values, each carrying the lowest original
    // index among its duplicates (the index the linear scan would keep).
    let mut order: Vec<u16> = (0..centroids.len() as u16).collect();
    order.sort_by(|&a, &b| {
        centroids[usize::from(a)]
            .partial_cmp(&centroids[usize::from(b)])
            .expect("centroids are finite")
            .then(a.cmp(&b))
    });
    let mut values: Vec<f64> = Vec::with_capacity(order.len());
    let mut index: Vec<u16> = Vec::with_capacity(order.len());
    for &i in &order {
        let v = centroids[usize::from(i)];
        if values.last() != Some(&v) {
            values.push(v);
            index.push(i); // first occurrence in sorted order = lowest index
        }
    }

    for (x, slot) in theta.iter().zip(mapping.iter_mut()) {
        let right = values.partition_point(|v| v < x);
        *slot = if right == 0 {
            index[0]
        } else if right == values.len() {
            index[right - 1]
        } else {
            let dl = x - values[right - 1];
            let dr = x - values[right];
            let (dl2, dr2) = (dl * dl, dr * dr);
            match dl2.partial_cmp(&dr2).expect("finite distances") {
                Ordering::Less => index[right - 1],
                Ordering::Greater => index[right],
                Ordering::Equal => index[right - 1].min(index[right]),
            }
        };
    }
}

/// Give every empty cluster the point farthest from its current centroid.
///
/// Empty clusters are filled in ascending index order; donor points are
/// scanned in ascending parameter order keeping the strictly largest
/// squared distance (so ties stay with the lower parameter index), and only
/// clusters with at least two members may donate. With d ≥ κ a donor always
/// exists by pigeonhole.
fn repair_empty_clusters(theta: &[f64], centroids: &[f64], mapping: &mut [u16]) {
    let mut counts = vec![0usize; centroids.len()];
    for &p in mapping.iter() {
        counts[usize::from(p)] += 1;
    }
    for empty in 0..centroids.len() {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (j, (x, &p)) in theta.iter().zip(mapping.iter()).enumerate() {
            if counts[usize::from(p)] < 2 {
                continue;
            }
            let diff = x - centroids[usize::from(p)];
            let d2 = diff * diff;
            if donor.map_or(true, |(_, best)| d2 > best) {
                donor = Some((j, d2));
            }
        }
        let (j, _) = donor.expect("d >= kappa guarantees a cluster with >= 2 members");
        counts[usize::from(mapping[j])] -= 1;
        mapping[j] = empty as u16;
        counts[empty] += 1;
    }
}

/// Mean update, accumulated in ascending parameter order per cluster.
/// A cluster left empty mid-repair cannot occur here (repair runs first),
/// but duplicated centroid values can; means are computed independently.
fn update_means(theta: &[f64], mapping: &[u16], centroids: &mut [f64]) {
    let mut sums = vec![0.0f64; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (x, &p) in theta.iter().zip(mapping) {
        sums[usize::from(p)] += x;
        counts[usize::from(p)] += 1;
    }
    for ((z, sum), count) in centroids.iter_mut().zip(&sums).zip(&counts) {
        if *count > 0 {
            *z = sum / *count as f64;
        }
    }
}

// ── Mapping wire format ─────────────────────────────────────────────────

/// Bits per mapping entry: ⌈log2 κ⌉ (zero when κ = 1).
pub fn mapping_entry_bits(kappa: u16) -> u32 {
    ceil_log2(u32::from(kappa))
}

fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x > 0);
    32 - (x - 1).leading_zeros()
}

/// Serialized mapping length in bytes: 6-byte header plus the byte-padded
/// packed entries.
pub fn mapping_wire_len(dim: usize, kappa: u16) -> usize {
    6 + (dim * mapping_entry_bits(kappa) as usize).div_ceil(8)
}

/// Serialize a mapping: 4-byte little-endian d ∥ 2-byte little-endian κ ∥
/// d entries packed at ⌈log2 κ⌉ bits each, least-significant bits first,
/// zero-padded to a whole byte. This payload (not the centroids) is the
/// compressible portion of a client update.
pub fn encode_mapping(kappa: u16, mapping: &[u16]) -> Result<Vec<u8>, WclustError> {
    if kappa == 0 {
        return Err(WclustError::ZeroKappa);
    }
    let dim = u32::try_from(mapping.len())
        .map_err(|_| WclustError::DimensionTooLarge(mapping.len()))?;
    for (position, &entry) in mapping.iter().enumerate() {
        if entry >= kappa {
            return Err(WclustError::MappingOutOfRange {
                entry,
                position,
                kappa: usize::from(kappa),
            });
        }
    }
    let width = mapping_entry_bits(kappa);
    let mut out = Vec::with_capacity(mapping_wire_len(mapping.len(), kappa));
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&kappa.to_le_bytes());
    let mut acc: u64 = 0;
    let mut bits: u32 = 0;
    for &entry in mapping {
        acc |= u64::from(entry) << bits;
        bits += width;
        while bits >= 8 {
            out.push((acc & 0xFF) as u8);
            acc >>= 8;
            bits -= 8;
        }
    }
    if bits > 0 {
        out.push((acc & 0xFF) as u8);
    }
    Ok(out)
}

/// Inverse of [`encode_mapping`]; strict about trailing padding bits so the
/// encoding is canonical (encode ∘ decode = identity on bytes).
pub fn decode_mapping(bytes: &[u8]) -> Result<(u16, Vec<u16>), MappingWireError> {
    if bytes.len() < 6 {
        return Err(MappingWireError::TruncatedHeader);
    }
    let dim = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let kappa = u16::from_le_bytes(bytes[4..6].try_into().expect("2 bytes"));
    if kappa == 0 {
        return Err(MappingWireError::ZeroKappa);
    }
    let expected = mapping_wire_len(dim, kappa);
    if bytes.len() != expected {
        return Err(MappingWireError::Length { expected, got: bytes.len() });
    }
    let width = mapping_entry_bits(kappa);
    let mask = if width == 0 { 0 } else { (1u64 << width) - 1 };
    let mut mapping = Vec::with_capacity(dim);
    let mut acc: u64 = 0;
    let mut bits: u32 = 0;
    let mut cursor = 6;
    for position in 0..dim {
        while bits < width {
            acc |= u64::from(bytes[cursor]) << bits;
            cursor += 1;
            bits += 8;
        }
        let entry = (acc & mask) as u16;
        acc >>= width;
        bits -= width;
        if entry >= kappa {
            return Err(MappingWireError::EntryOutOfRange { entry, position, kappa });
        }
        mapping.push(entry);
    }
    if acc != 0 || bytes[cursor..].iter().any(|&b| b != 0) {
        return Err(MappingWireError::NonZeroPadding);
    }
    Ok((kappa, mapping))
}
