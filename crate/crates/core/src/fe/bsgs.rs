//! Baby-step giant-step recovery of bounded signed exponents.
//!
//! Decryption ends with a target-group element known to be `base^α` for some
//! signed `α` with `|α| ≤ bound` (the aggregate of `n` fixed-point values,
//! each bounded by `B`, so `bound = n·B`). The search is shifted into
//! `β = α + bound ∈ [0, 2·bound]` and solved with a canonical-bytes hash
//! table of `m = ⌈√(2·bound+1)⌉` baby steps. The table lives inside
//! [`super::PublicParams`] and is built once; lookups are read-only and safe
//! to share across threads.

use std::collections::HashMap;

use super::backend::{GroupElement, Scalar};

/// Precomputed baby steps for one `(base, bound)` pair.
#[derive(Debug)]
pub struct BsgsTable<G: GroupElement> {
    /// Canonical bytes of `base^j` → `j`, for `j ∈ [0, m)`.
    baby: HashMap<Vec<u8>, u64>,
    /// `base^{-m}`, applied between giant steps.
    giant_stride: G,
    /// `base^{bound}`, the shift from signed `α` to non-negative `β`.
    shift: G,
    m: u64,
    bound: u64,
}

impl<G: GroupElement> BsgsTable<G> {
    /// Tabulate baby steps for exponents `α ∈ [−bound, bound]` of `base`.
    pub fn build(base: &G, bound: u64) -> Self {
        let span = 2 * bound + 1;
        let m = (span as f64).sqrt().ceil() as u64;
        let mut baby = HashMap::with_capacity(m as usize);
        let mut cur = G::identity();
        for j in 0..m {
            baby.entry(cur.to_bytes()).or_insert(j);
            cur = cur.add(base);
        }
        BsgsTable {
            baby,
            giant_stride: base.mul(&-Scalar::from(m)),
            shift: base.mul(&Scalar::from(bound)),
            m,
            bound,
        }
    }

    /// The inclusive magnitude bound this table was built for.
    pub fn bound(&self) -> u64 {
        self.bound
    }

    /// Number of tabulated baby steps.
    pub fn len(&self) -> usize {
        self.baby.len()
    }

    /// Whether the table is empty (only for a degenerate zero-step build).
    pub fn is_empty(&self) -> bool {
        self.baby.is_empty()
    }

    /// Find the signed `α ∈ [−bound, bound]` with `base^α = target`.
    ///
    /// Returns `None` when no in-range exponent matches — the caller treats
    /// that as a decryption failure.
    pub fn solve(&self, target: &G) -> Option<i64> {
        let span = 2 * self.bound + 1;
        let mut gamma = target.add(&self.shift); // base^{α + bound}
        let giant_steps = span.div_ceil(self.m);
        for q in 0..giant_steps {
            if let Some(&j) = self.baby.get(gamma.to_bytes().as_slice()) {
                let beta = q * self.m + j;
                if beta <= 2 * self.bound {
                    return Some(beta as i64 - self.bound as i64);
                }
                // A match beyond 2·bound encodes an out-of-range exponent.
                return None;
            }
            gamma = gamma.add(&self.giant_stride);
        }
        None
    }
}

/// One-shot bounded discrete log: build a throwaway table and solve.
///
/// Production decryption goes through the table cached in
/// [`super::PublicParams`]; this entry point serves tests and tooling.
pub fn bsgs_dlog<G: GroupElement>(target: &G, bound: u64, base: &G) -> Option<i64> {
    BsgsTable::build(base, bound).solve(target)
}
