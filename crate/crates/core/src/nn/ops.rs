//! Forward and backward passes.
//!
//! The backward machinery is seeded at the logits: every loss in the
//! pipeline (cross-entropy, its negation, the adversarial term, the MAS
//! output-norm) reduces to some `∂loss/∂logits`, which
//! [`backward_from_logits`] pushes through the head and trunk to produce
//! parameter gradients and, on request, input gradients (for PGD).

use super::{Batch, LayerSpec, ModelParams, NnError};

/// Cached activations from one forward evaluation of a batch.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub batch_size: usize,
    pub task: usize,
    /// Post-ReLU activations per trunk layer, each `batch_size × out_dim`.
    pub trunk_post: Vec<Vec<f64>>,
    /// Head outputs, `batch_size × heads[task]`.
    pub logits: Vec<f64>,
    /// Softmax of the logits, same shape; rows sum to 1.
    pub probs: Vec<f64>,
}

fn linear(theta: &[f64], layer: &LayerSpec, input: &[f64], batch: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * layer.out_dim];
    for b in 0..batch {
        let row = &input[b * layer.in_dim..(b + 1) * layer.in_dim];
        let out_row = &mut out[b * layer.out_dim..(b + 1) * layer.out_dim];
        for (o, slot) in out_row.iter_mut().enumerate() {
            let weights =
                &theta[layer.weight_offset + o * layer.in_dim..layer.weight_offset + (o + 1) * layer.in_dim];
            let mut acc = theta[layer.bias_offset + o];
            for (w, x) in weights.iter().zip(row) {
                acc += w * x;
            }
            *slot = acc;
        }
    }
    out
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut probs = vec![0.0; logits.len()];
    for (row, out) in logits.chunks_exact(classes).zip(probs.chunks_exact_mut(classes)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, &z) in out.iter_mut().zip(row) {
            *p = (z - max).exp();
            total += *p;
        }
        for p in out.iter_mut() {
            *p /= total;
        }
    }
    probs
}

/// Evaluate the network on a batch, returning logits, probabilities, and
/// the cached activations needed for a backward pass.
pub fn forward(model: &ModelParams, batch: &Batch) -> Result<ForwardPass, NnError> {
    let arch = model.arch();
    let batch_size = batch.len();
    if batch.inputs.len() != batch_size * arch.input_dim {
        return Err(NnError::DimensionMismatch {
            what: "batch inputs",
            expected: batch_size * arch.input_dim,
            got: batch.inputs.len(),
        });
    }
    let head = arch.head_layer(batch.task)?;
    let classes = head.out_dim;
    if let Some(&bad) = batch.labels.iter().find(|&&y| y as usize >= classes) {
        return Err(NnError::DimensionMismatch {
            what: "class label",
            expected: classes,
            got: bad as usize,
        });
    }

    let theta = model.theta();
    let mut trunk_post = Vec::with_capacity(arch.hidden.len());
    let mut current: &[f64] = &batch.inputs;
    for layer in arch.trunk_layers() {
        let mut pre = linear(theta, &layer, current, batch_size);
        for v in &mut pre {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        trunk_post.push(pre);
        current = trunk_post.last().expect("just pushed");
    }
    let logits = linear(theta, &head, current, batch_size);
    let probs = softmax_rows(&logits, classes);
    Ok(ForwardPass { batch_size, task: batch.task, trunk_post, logits, probs })
}

/// Parameter gradient (flat, length d) and optional input gradient
/// (`batch × input_dim`) from one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub dtheta: Vec<f64>,
    pub dinputs: Option<Vec<f64>>,
}

/// Backpropagate an arbitrary logit gradient through the task head and
/// trunk. `dlogits` is `∂loss/∂logits` (`batch × heads[task]`); parameters
/// outside the trunk and the active head keep zero gradient.
pub fn backward_from_logits(
    model: &ModelParams,
    batch: &Batch,
    pass: &ForwardPass,
    dlogits: &[f64],
    want_input_grad: bool,
) -> Gradients {
    let arch = model.arch();
    let theta = model.theta();
    let head = arch.head_layer(pass.task).expect("task validated in forward");
    debug_assert_eq!(dlogits.len(), pass.batch_size * head.out_dim);

    let mut dtheta = vec![0.0; theta.len()];
    let trunk = arch.trunk_layers();

    // The head consumes the last trunk activation (or the raw inputs).
    let head_input: &[f64] =
        trunk.last().map(|_| pass.trunk_post.last().expect("trunk ran").as_slice()).unwrap_or(&batch.inputs);
    let mut dcurrent =
        backward_linear(theta, &mut dtheta, &head, head_input, dlogits, pass.batch_size);

    // Walk the trunk in reverse, gating each layer by its ReLU.
    for (l, layer) in trunk.iter().enumerate().rev() {
        for (dv, &post) in dcurrent.iter_mut().zip(&pass.trunk_post[l]) {
            if post <= 0.0 {
                *dv = 0.0;
            }
        }
        let layer_input: &[f64] =
            if l == 0 { &batch.inputs } else { &pass.trunk_post[l - 1] };
        let dinput =
            backward_linear(theta, &mut dtheta, layer, layer_input, &dcurrent, pass.batch_size);
        if l == 0 && !want_input_grad {
            dcurrent = Vec::new();
        } else {
            dcurrent = dinput;
        }
    }

    // With no trunk, `dcurrent` is the head's input gradient already.
    let dinputs = want_input_grad.then_some(dcurrent);
    Gradients { dtheta, dinputs }
}

/// Accumulate one dense layer's parameter gradients and return the gradient
/// with respect to its input.
fn backward_linear(
    theta: &[f64],
    dtheta: &mut [f64],
    layer: &LayerSpec,
    input: &[f64],
    doutput: &[f64],
    batch: usize,
) -> Vec<f64> {
    let mut dinput = vec![0.0; batch * layer.in_dim];
    for b in 0..batch {
        let in_row = &input[b * layer.in_dim..(b + 1) * layer.in_dim];
        let dout_row = &doutput[b * layer.out_dim..(b + 1) * layer.out_dim];
        let din_row = &mut dinput[b * layer.in_dim..(b + 1) * layer.in_dim];
        for (o, &dz) in dout_row.iter().enumerate() {
            dtheta[layer.bias_offset + o] += dz;
            let w_start = layer.weight_offset + o * layer.in_dim;
            let dw_row = &mut dtheta[w_start..w_start + layer.in_dim];
            let w_row = &theta[w_start..w_start + layer.in_dim];
            for i in 0..layer.in_dim {
                dw_row[i] += dz * in_row[i];
                din_row[i] += dz * w_row[i];
            }
        }
    }
    dinput
}

/// Mean cross-entropy loss of a batch (forward only).
pub fn ce_loss(model: &ModelParams, batch: &Batch) -> Result<f64, NnError> {
    let pass = forward(model, batch)?;
    Ok(ce_of_pass(&pass, &batch.labels, model.arch().heads[batch.task]))
}

fn ce_of_pass(pass: &ForwardPass, labels: &[u32], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in pass.probs.chunks_exact(classes).zip(labels) {
        total -= row[y as usize].max(1e-300).ln();
    }
    total / labels.len() as f64
}

/// The softmax-CE logit gradient `(p − onehot(y)) / B`.
pub fn ce_dlogits(pass: &ForwardPass, labels: &[u32], classes: usize) -> Vec<f64> {
    let scale = 1.0 / labels.len() as f64;
    let mut dlogits = pass.probs.clone();
    for (row, &y) in dlogits.chunks_exact_mut(classes).zip(labels) {
        row[y as usize] -= 1.0;
        for v in row {
            *v *= scale;
        }
    }
    dlogits
}

/// Exact backprop gradient and value of the mean cross-entropy on a batch.
pub fn grad_ce(model: &ModelParams, batch: &Batch) -> Result<(Vec<f64>, f64), NnError> {
    let classes = model.arch().heads[batch.task];
    let pass = forward(model, batch)?;
    let loss = ce_of_pass(&pass, &batch.labels, classes);
    let dlogits = ce_dlogits(&pass, &batch.labels, classes);
    let grads = backward_from_logits(model, batch, &pass, &dlogits, false);
    Ok((grads.dtheta, loss))
}
