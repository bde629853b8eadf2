//! Task and distillation losses.
//!
//! Probabilities are clamped to `[1e-7, 1 - 1e-7]` inside the losses so the
//! logs stay finite. The distillation loss is the binary cross-entropy
//! between teacher and student predictions; with temperature `T != 1` both
//! sides are re-derived from logits as `sigmoid(logit / T)` before the
//! formula is applied, so `T = 1` recovers the plain form. Teacher
//! probabilities are constants: no gradient ever flows to the teacher
//! through this loss.

use crate::error::{Error, Result};
use crate::model::batch::SampleBatch;

pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of a probability; convenience for tests and pseudo labels.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[inline]
fn xent(target: f64, p: f64) -> f64 {
    let p = clamp_prob(p);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean binary cross-entropy. Labels may be hard 0/1 or soft values in [0,1].
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "bce_loss length mismatch: {} probs vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Shape("bce_loss on empty batch".into()));
    }
    let sum: f64 = probs.iter().zip(labels).map(|(&p, &y)| xent(y, p)).sum();
    Ok(sum / probs.len() as f64)
}

/// Distillation cross-entropy between tempered teacher and student
/// predictions, from logits.
pub fn kd_loss(student_logits: &[f64], teacher_logits: &[f64], temperature: f64) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if student_logits.len() != teacher_logits.len() {
        return Err(Error::Shape(format!(
            "kd_loss length mismatch: {} student vs {} teacher",
            student_logits.len(),
            teacher_logits.len()
        )));
    }
    if student_logits.is_empty() {
        return Err(Error::Shape("kd_loss on empty batch".into()));
    }
    let sum: f64 = student_logits
        .iter()
        .zip(teacher_logits)
        .map(|(&zs, &zt)| xent(sigmoid(zt / temperature), sigmoid(zs / temperature)))
        .sum();
    Ok(sum / student_logits.len() as f64)
}

/// Loss breakdown for one batch; `total = bce + lambda * kd` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub bce: f64,
    pub kd: f64,
    pub total: f64,
}

/// What backward differentiates: task loss plus `lambda` times the
/// distillation term against fixed teacher logits.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub lambda: f64,
    pub temperature: f64,
    pub teacher_logits: Option<&'a [f64]>,
}

impl<'a> LossSpec<'a> {
    pub fn task_only() -> Self {
        LossSpec { lambda: 0.0, temperature: 1.0, teacher_logits: None }
    }

    pub fn validate(&self, batch_len: usize) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(tl) = self.teacher_logits {
            if tl.len() != batch_len {
                return Err(Error::Shape(format!(
                    "teacher logits length {} vs batch {batch_len}",
                    tl.len()
                )));
            }
        }
        Ok(())
    }
}

/// Batch loss under `spec`.
///
/// Hard-labeled rows contribute their BCE to the task bucket and their
/// tempered teacher cross-entropy to the distillation bucket. Pseudo-labeled
/// rows contribute a single cross-entropy against their stored soft target to
/// the task bucket and nothing to the distillation bucket. Both buckets are
/// means over the full batch, so the accounting identity holds by
/// construction.
pub fn batch_loss(batch: &SampleBatch, student_logits: &[f64], spec: &LossSpec) -> Result<BatchLoss> {
    spec.validate(batch.len())?;
    if student_logits.len() != batch.len() {
        return Err(Error::Shape(format!(
            "logit count {} vs batch {}",
            student_logits.len(),
            batch.len()
        )));
    }
    let b = batch.len() as f64;
    let mut task_sum = 0.0;
    let mut kd_sum = 0.0;
    for (row, &z) in student_logits.iter().enumerate() {
        let p = sigmoid(z);
        match batch.soft[row] {
            Some(s) => task_sum += xent(s, p),
            None => {
                task_sum += xent(batch.label[row], p);
                if let Some(tl) = spec.teacher_logits {
                    kd_sum += xent(
                        sigmoid(tl[row] / spec.temperature),
                        sigmoid(z / spec.temperature),
                    );
                }
            }
        }
    }
    let bce = task_sum / b;
    let kd = kd_sum / b;
    let total = bce + spec.lambda * kd;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss: {total}")));
    }
    Ok(BatchLoss { bce, kd, total })
}

/// Per-row d(total)/d(logit) matching [`batch_loss`] exactly, including the
/// zero gradient inside clamped regions.
pub fn loss_dlogits(batch: &SampleBatch, student_logits: &[f64], spec: &LossSpec) -> Result<Vec<f64>> {
    spec.validate(batch.len())?;
    let b = batch.len() as f64;
    let mut out = Vec::with_capacity(batch.len());
    for (row, &z) in student_logits.iter().enumerate() {
        let p = sigmoid(z);
        let in_open = p > PROB_EPS && p < 1.0 - PROB_EPS;
        let mut g = 0.0;
        match batch.soft[row] {
            Some(s) => {
                if in_open {
                    g += p - s;
                }
            }
            None => {
                if in_open {
                    g += p - batch.label[row];
                }
                if let Some(tl) = spec.teacher_logits {
                    let qs = sigmoid(z / spec.temperature);
                    let qt = sigmoid(tl[row] / spec.temperature);
                    if qs > PROB_EPS && qs < 1.0 - PROB_EPS {
                        g += spec.lambda * (qs - qt) / spec.temperature;
                    }
                }
            }
        }
        out.push(g / b);
    }
    Ok(out)
}
