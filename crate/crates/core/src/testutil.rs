//! Test-only oracles and builders shared between unit and integration tests.
//!
//! The finite-difference harness here is the independent check for every
//! hand-coded gradient: it re-evaluates the full loss under parameter
//! perturbations and never touches the backward path it verifies.

use crate::model::{batch_loss, LossSpec, PredictionModel, Sample, SampleBatch};

/// Central finite-difference gradient of the batch loss with step `h`,
/// flattened in model parameter order.
pub fn fd_gradient(
    model: &PredictionModel,
    batch: &SampleBatch,
    spec: &LossSpec,
    h: f64,
) -> Vec<f64> {
    let mut m = model.clone();
    let n = m.param_len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let base = m.param_get(i);
        m.param_set(i, base + h);
        let up = batch_loss(batch, &m.forward(batch).unwrap().logits, spec).unwrap().total;
        m.param_set(i, base - h);
        let down = batch_loss(batch, &m.forward(batch).unwrap().logits, spec).unwrap().total;
        m.param_set(i, base);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Relative error with a floor that reflects the finite-difference noise
/// level (absolute error around 1e-10 for h = 1e-5).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// O(n^2) pair-counting AUC; ties between a positive and a negative count
/// one half.
pub fn auc_pair_counting(preds: &[f64], labels: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..preds.len() {
        if labels[i] <= 0.5 {
            continue;
        }
        for j in 0..preds.len() {
            if labels[j] > 0.5 {
                continue;
            }
            pairs += 1.0;
            if preds[i] > preds[j] {
                wins += 1.0;
            } else if preds[i] == preds[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Deterministic micro-batch over a model's schema for gradient checks.
pub fn random_batch(model: &PredictionModel, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = crate::rng::Rng64::new(seed);
    let schema = &model.schema;
    (0..n)
        .map(|i| {
            let cat: Vec<u32> = schema
                .fields
                .iter()
                .filter_map(|f| match f.kind {
                    crate::model::FieldKind::Categorical { vocab_size, .. } => {
                        Some(rng.gen_below(vocab_size as u64) as u32)
                    }
                    _ => None,
                })
                .collect();
            let num: Vec<f64> = (0..schema.n_num).map(|_| rng.next_normal()).collect();
            Sample {
                cat,
                num,
                label: f64::from(rng.next_f64() < 0.5),
                soft: None,
                click: None,
                ts: i as i64,
            }
        })
        .collect()
}
