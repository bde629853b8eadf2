//! Evaluation metrics (AUC, LogLoss, pCVR bias, Spearman, NDCG@K) and the
//! model-switching-cost decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::losses::bce_loss;
use crate::model::{PredictionModel, Sample};
use crate::util::{fingerprint_f64, FNV_OFFSET};

/// Metric bundle for one model on one evaluation split. Each metric is
/// present only when the split carries the labels it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
    pub pcvr_bias: Option<f64>,
    pub spearman: Option<f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub steps: u64,
    pub elapsed_ms: u64,
    /// Fingerprint of the evaluation split; switching-cost comparisons
    /// require both reports to share it.
    pub eval_fingerprint: u64,
    pub n_eval: usize,
}

impl RunReport {
    pub fn empty() -> Self {
        RunReport {
            auc: None,
            logloss: None,
            pcvr_bias: None,
            spearman: None,
            ndcg_at: BTreeMap::new(),
            steps: 0,
            elapsed_ms: 0,
            eval_fingerprint: 0,
            n_eval: 0,
        }
    }
}

/// Computation vs performance cost of switching models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchingCostReport {
    /// Training steps spent producing the student.
    pub c_comp_steps: u64,
    /// Wall clock spent producing the student.
    pub c_comp_ms: u64,
    /// Student test loss minus teacher test loss on the identical split;
    /// positive means the teacher was still better.
    pub c_perf: f64,
}

/// Fingerprint of an evaluation split (labels and timestamps).
pub fn split_fingerprint(rows: &[Sample]) -> u64 {
    let mut h = FNV_OFFSET;
    let labels: Vec<f64> = rows.iter().map(|s| s.label).collect();
    fingerprint_f64(&mut h, &labels);
    let ts: Vec<f64> = rows.iter().map(|s| s.ts as f64).collect();
    fingerprint_f64(&mut h, &ts);
    h
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via rank sums; a tie between a positive and a
/// negative prediction counts one half.
pub fn auc(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape("auc length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(
            "auc requires both classes in the labels".into(),
        ));
    }
    let ranks = average_ranks(preds);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y > 0.5)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean logarithmic loss; shares the clamped cross-entropy with training.
pub fn logloss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    bce_loss(preds, labels)
}

/// pCVR bias with diagnostics about excluded zero-actual items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcvrBias {
    pub bias: f64,
    pub n_items: usize,
    pub n_excluded: usize,
}

/// Mean absolute relative deviation between predicted and actual per-item
/// rates. Items with zero actual rate cannot enter the ratio; they are
/// excluded and counted.
pub fn pcvr_bias_report(preds: &[f64], actuals: &[f64]) -> Result<PcvrBias> {
    if preds.len() != actuals.len() {
        return Err(Error::Shape("pcvr_bias length mismatch".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for (&p, &a) in preds.iter().zip(actuals) {
        if a > 0.0 {
            sum += ((p - a) / a).abs();
            n += 1;
        } else {
            excluded += 1;
        }
    }
    if n == 0 {
        return Err(Error::MetricUndefined(
            "pcvr_bias: every item had zero actual rate".into(),
        ));
    }
    Ok(PcvrBias { bias: sum / n as f64, n_items: n, n_excluded: excluded })
}

pub fn pcvr_bias(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    Ok(pcvr_bias_report(preds, actuals)?.bias)
}

/// Per-item pCVR bias where items are keyed by a categorical field; the
/// actual rate is the empirical conversion rate of the item's rows.
pub fn pcvr_bias_grouped(item_keys: &[u32], preds: &[f64], labels: &[f64]) -> Result<PcvrBias> {
    if item_keys.len() != preds.len() || preds.len() != labels.len() {
        return Err(Error::Shape("pcvr_bias_grouped length mismatch".into()));
    }
    let mut acc: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for ((&k, &p), &y) in item_keys.iter().zip(preds).zip(labels) {
        let e = acc.entry(k).or_insert((0.0, 0.0, 0));
        e.0 += p;
        e.1 += y;
        e.2 += 1;
    }
    let mut item_preds = Vec::with_capacity(acc.len());
    let mut item_actuals = Vec::with_capacity(acc.len());
    for (_, (psum, ysum, cnt)) in acc {
        item_preds.push(psum / cnt as f64);
        item_actuals.push(ysum / cnt as f64);
    }
    pcvr_bias_report(&item_preds, &item_actuals)
}

/// Spearman rank correlation using average ranks and the classic
/// `1 - 6 sum d^2 / (n (n^2 - 1))` form.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape("spearman length mismatch".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::MetricUndefined("spearman needs at least two points".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let nf = n as f64;
    Ok(1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)))
}

/// Exact alternative: Pearson correlation of the rank vectors. Differs from
/// [`spearman`] only in the presence of ties.
pub fn spearman_exact(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape("spearman length mismatch".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::MetricUndefined("spearman needs at least two points".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::MetricUndefined("spearman undefined for constant ranks".into()));
    }
    Ok(num / (vx * vy).sqrt())
}

fn dcg(rels: &[f64], k: usize) -> f64 {
    rels.iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| (2f64.powf(rel) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@K: DCG of the first K predicted positions over the ideal DCG@K.
/// Returns 0 when the ideal DCG is zero.
pub fn ndcg_at_k(predicted_order_rels: &[f64], ideal_rels: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("ndcg requires K >= 1".into()));
    }
    let mut ideal = ideal_rels.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(predicted_order_rels, k) / idcg)
}

/// Switching cost from two reports on the identical test split.
pub fn switching_cost(
    student: &RunReport,
    teacher: &RunReport,
    steps: u64,
    elapsed_ms: u64,
) -> Result<SwitchingCostReport> {
    if student.eval_fingerprint != teacher.eval_fingerprint {
        return Err(Error::Contract(
            "switching cost requires both models evaluated on the identical test split".into(),
        ));
    }
    let (s, t) = match (student.logloss, teacher.logloss) {
        (Some(s), Some(t)) => (s, t),
        _ => {
            return Err(Error::MetricUndefined(
                "switching cost needs logloss on both reports".into(),
            ))
        }
    };
    Ok(SwitchingCostReport { c_comp_steps: steps, c_comp_ms: elapsed_ms, c_perf: s - t })
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Categorical field index used as the pCVR item key; enables the bias
    /// metric when the split carries click labels.
    pub item_key_field: Option<usize>,
    pub batch_size: usize,
}

/// Evaluate a model on a split: AUC and LogLoss always (when defined), pCVR
/// bias when an item key is configured.
pub fn evaluate(model: &PredictionModel, rows: &[Sample], opts: &EvalOptions) -> Result<RunReport> {
    if rows.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let bs = if opts.batch_size == 0 { 4096 } else { opts.batch_size };
    let preds = model.predict(rows, bs)?;
    let labels: Vec<f64> = rows.iter().map(|s| s.label).collect();
    let mut report = RunReport::empty();
    report.n_eval = rows.len();
    report.eval_fingerprint = split_fingerprint(rows);
    report.auc = auc(&preds, &labels).ok();
    report.logloss = Some(logloss(&preds, &labels)?);
    if let Some(field) = opts.item_key_field {
        if field < model.schema.n_cat {
            let keys: Vec<u32> = rows.iter().map(|s| s.cat[field]).collect();
            if let Ok(b) = pcvr_bias_grouped(&keys, &preds, &labels) {
                report.pcvr_bias = Some(b.bias);
            }
        }
    }
    Ok(report)
}
