//! Seeded non-IID data partitioning.
//!
//! Class proportions per client are drawn from a symmetric Dirichlet(a):
//! small `a` concentrates each class on few clients (label skew), large
//! `a` approaches a uniform split. Draws that leave any client empty are
//! redrawn, so every client ends up with at least one sample.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::Dataset;

use super::FedError;

const MAX_RESAMPLE_ATTEMPTS: usize = 200;

/// Split `dataset` into `n` disjoint client datasets whose union is the
/// input, allocating each class by a seeded Dirichlet(`alpha`) draw.
pub fn partition_dirichlet(
    dataset: &Dataset,
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Dataset>, FedError> {
    if n == 0 || !(alpha > 0.0) {
        return Err(FedError::InvalidPartition {
            reason: "need n ≥ 1 clients and alpha > 0",
        });
    }
    if dataset.len() < n {
        return Err(FedError::DatasetTooSmall { clients: n, samples: dataset.len() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Class-index pools, shuffled once so allocation cuts are random.
    let classes = dataset.num_classes() as usize;
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &label) in dataset.labels().iter().enumerate() {
        pools[label as usize].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }

    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
        for pool in &pools {
            if pool.is_empty() {
                continue;
            }
            let shares = dirichlet_draw(n, alpha, &mut rng);
            // Cumulative-rounding cuts: client i gets pool[c_{i-1}..c_i],
            // c_i = round(Σ_{k≤i} share_k · |pool|); the cuts exhaust the
            // pool exactly.
            let mut cum = 0.0;
            let mut start = 0usize;
            for (i, &share) in shares.iter().enumerate() {
                cum += share;
                let end = if i + 1 == n {
                    pool.len()
                } else {
                    ((cum * pool.len() as f64).round() as usize).min(pool.len())
                };
                parts[i].extend_from_slice(&pool[start..end.max(start)]);
                start = end.max(start);
            }
        }
        if parts.iter().all(|p| !p.is_empty()) {
            return Ok(parts
                .into_iter()
                .map(|mut p| {
                    p.sort_unstable();
                    dataset.subset(&p)
                })
                .collect());
        }
    }
    Err(FedError::DatasetTooSmall { clients: n, samples: dataset.len() })
}

/// Symmetric Dirichlet(alpha) over `n` parts by the Gamma-normalization
/// construction: G_i ~ Gamma(alpha, 1), share_i = G_i / Σ G_k.
fn dirichlet_draw(n: usize, alpha: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("validated parameters");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        // Tiny alpha can underflow every draw to zero; redraw in that case.
        if sum > 0.0 && sum.is_finite() {
            return draws.iter().map(|d| d / sum).collect();
        }
    }
}
