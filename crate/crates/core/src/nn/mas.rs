//! Memory Aware Synapses importance estimation.
//!
//! For each unlabeled sample the surrogate is the squared ℓ2 norm of the
//! softmax output, `f(x; θ) = ‖p(x)‖²`. Its logit gradient has the closed
//! form `∂f/∂z_j = 2·p_j·(p_j − S)` with `S = Σ_k p_k²`, which seeds one
//! backward pass per sample; the importance of parameter `j` is the mean
//! absolute parameter gradient over the dataset,
//! `Ω_j = (1/|D|) Σ_x |∂f(x)/∂θ_j|`.

use super::ops::{backward_from_logits, forward};
use super::{Batch, ModelParams, NnError};

/// Per-parameter importance, raw and rescaled into `[0,1]` by the maximum
/// raw score (an all-zero raw vector stays all-zero).
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceScores {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Estimate importance over `inputs` (`samples × input_dim`, unlabeled) for
/// the given task head.
pub fn mas_importance(
    model: &ModelParams,
    inputs: &[f64],
    task: usize,
) -> Result<ImportanceScores, NnError> {
    let input_dim = model.arch().input_dim;
    if inputs.is_empty() || input_dim == 0 {
        return Err(NnError::EmptyDataset);
    }
    if inputs.len() % input_dim != 0 {
        return Err(NnError::DimensionMismatch {
            what: "mas inputs",
            expected: input_dim * (inputs.len() / input_dim + 1),
            got: inputs.len(),
        });
    }
    let classes = model.arch().head_layer(task)?.out_dim;
    let samples = inputs.len() / input_dim;
    let mut raw = vec![0.0; model.theta().len()];

    for row in inputs.chunks_exact(input_dim) {
        let batch = Batch { inputs: row.to_vec(), labels: vec![0; 1], task };
        let pass = forward(model, &batch)?;
        let p = &pass.probs;
        let s: f64 = p.iter().map(|q| q * q).sum();
        let dlogits: Vec<f64> = p.iter().map(|&q| 2.0 * q * (q - s)).collect();
        debug_assert_eq!(dlogits.len(), classes);
        let grads = backward_from_logits(model, &batch, &pass, &dlogits, false);
        for (acc, g) in raw.iter_mut().zip(&grads.dtheta) {
            *acc += g.abs();
        }
    }
    let inv = 1.0 / samples as f64;
    for v in &mut raw {
        *v *= inv;
    }

    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    let normalized = if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(ImportanceScores { raw, normalized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::test_support::{finite_diff, max_rel_err};
    use crate::nn::{init_model, Architecture, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_inputs(seed: u64, count: usize, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..count * dim).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// Independent oracle: a single sample's raw importance is the absolute
    /// gradient of ‖p(x)‖², checked against central finite differences.
    #[test]
    fn single_sample_importance_matches_finite_difference() {
        let arch = Architecture::single_task(4, vec![5], 3); // 4·5+5 + 5·3+3 = 43 params
        let model = init_model(&arch, 21);
        let input = random_inputs(22, 1, 4);
        let scores = mas_importance(&model, &input, 0).unwrap();

        let numeric = finite_diff(
            &model,
            |m: &ModelParams| {
                let batch = Batch { inputs: input.clone(), labels: vec![0], task: 0 };
                let pass = forward(m, &batch).unwrap();
                pass.probs.iter().map(|q| q * q).sum::<f64>()
            },
            1e-4,
        );
        let numeric_abs: Vec<f64> = numeric.iter().map(|g| g.abs()).collect();
        let err = max_rel_err(&scores.raw, &numeric_abs);
        assert!(err <= 1e-3, "max relative error {err}");
    }

    #[test]
    fn dataset_importance_is_mean_of_per_sample_scores() {
        let arch = Architecture::single_task(3, vec![4], 2);
        let model = init_model(&arch, 30);
        let inputs = random_inputs(31, 6, 3);
        let full = mas_importance(&model, &inputs, 0).unwrap();
        let mut mean = vec![0.0; arch.param_count()];
        for row in inputs.chunks_exact(3) {
            let one = mas_importance(&model, row, 0).unwrap();
            for (m, r) in mean.iter_mut().zip(&one.raw) {
                *m += r / 6.0;
            }
        }
        let err = max_rel_err(&full.raw, &mean);
        assert!(err <= 1e-12, "max relative error {err}");
    }

    #[test]
    fn zero_output_layer_yields_zero_importance() {
        // Zero head ⇒ uniform softmax ⇒ ∂f/∂z_j = 2·(1/C)(1/C − 1/C) = 0.
        // C is a power of two so 1/C and Σ(1/C)² are exact dyadic floats and
        // the cancellation holds bit-for-bit, not just approximately.
        let arch = Architecture::single_task(4, vec![3], 4);
        let model = ModelParams::from_theta(arch.clone(), vec![0.0; arch.param_count()]).unwrap();
        let scores = mas_importance(&model, &random_inputs(33, 8, 4), 0).unwrap();
        assert!(scores.raw.iter().all(|&v| v == 0.0));
        assert!(scores.normalized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_scores_peak_at_one() {
        let arch = Architecture::single_task(5, vec![4], 3);
        let model = init_model(&arch, 34);
        let scores = mas_importance(&model, &random_inputs(35, 10, 5), 0).unwrap();
        let max = scores.normalized.iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(max, 1.0);
        assert!(scores.normalized.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(scores.normalized.len(), arch.param_count());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let arch = Architecture::single_task(4, vec![], 2);
        let model = init_model(&arch, 36);
        assert!(matches!(mas_importance(&model, &[], 0), Err(NnError::EmptyDataset)));
    }

    #[test]
    fn multi_task_importance_ignores_inactive_heads() {
        let arch = Architecture { input_dim: 3, hidden: vec![4], heads: vec![2, 3] };
        let model = init_model(&arch, 37);
        let scores = mas_importance(&model, &random_inputs(38, 4, 3), 0).unwrap();
        let head1 = arch.head_layer(1).unwrap();
        let start = head1.weight_offset;
        let end = head1.bias_offset + head1.out_dim;
        assert!(scores.raw[start..end].iter().all(|&v| v == 0.0));
        // The trunk and active head must carry signal.
        assert!(scores.raw[..start].iter().any(|&v| v > 0.0));
    }
}
