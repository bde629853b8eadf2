//! Distribution-shift quantification over temporal windows and the adaptive
//! enhancement ratio.
//!
//! The training pool is split into `n` consecutive equal windows. For every
//! adjacent window pair and every feature, a divergence between the two
//! per-window feature distributions is recorded; the shift scalar is the
//! mean over pairs of the mean over features. Numerical features are binned
//! into `b` equal-width bins over the pooled min/max of the two windows being
//! compared (divergences need common support); categorical features use
//! normalized counts over the union of observed categories. The scalar is
//! computed once from the training pool before the online loop and held
//! fixed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FieldKind, FieldSchema, Sample};
use crate::sampler::chunk_ranges;

/// Additive smoothing used by the KL metric so near-empty bins stay finite.
const KL_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceMetric {
    Js,
    Kl,
    Wasserstein,
}

impl std::fmt::Display for DivergenceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DivergenceMetric::Js => write!(f, "js"),
            DivergenceMetric::Kl => write!(f, "kl"),
            DivergenceMetric::Wasserstein => write!(f, "wasserstein"),
        }
    }
}

/// Support shared by the two distributions of a compared window pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// `b + 1` strictly increasing bin edges.
    Bins(Vec<f64>),
    /// Sorted category ids (union of both windows).
    Categories(Vec<u32>),
}

/// One feature's estimated distribution inside one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowDistribution {
    pub feature: String,
    pub support: Support,
    pub probs: Vec<f64>,
}

/// Per-pair, per-feature divergence table plus the aggregate scalar and the
/// enhancement ratio derived from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftReport {
    pub metric: DivergenceMetric,
    pub n_windows: usize,
    pub bins: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// `[pair][feature]` divergences for adjacent pairs (i, i+1).
    pub per_pair: Vec<Vec<f64>>,
    /// Mean over features for each adjacent pair.
    pub per_pair_mean: Vec<f64>,
    pub delta_shift: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub k_max: f64,
    pub r_enh: f64,
}

impl ShiftReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("shift report serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Contiguous, order-preserving windows with sizes differing by at most one.
pub fn partition_windows(d: &[Sample], n: usize) -> Result<Vec<&[Sample]>> {
    if n == 0 {
        return Err(Error::Parameter("window count must be >= 1".into()));
    }
    if n > d.len() {
        return Err(Error::Parameter(format!(
            "cannot split {} samples into {n} windows",
            d.len()
        )));
    }
    Ok(chunk_ranges(d.len(), n).into_iter().map(|r| &d[r]).collect())
}

fn numeric_values(window: &[Sample], col: usize) -> Vec<f64> {
    window.iter().map(|s| s.num[col]).collect()
}

/// Shared support for one feature over a compared window pair.
pub fn pooled_support(
    wa: &[Sample],
    wb: &[Sample],
    schema: &FieldSchema,
    field_idx: usize,
    bins: usize,
) -> Result<Support> {
    if wa.is_empty() || wb.is_empty() {
        return Err(Error::Data("cannot estimate a distribution over an empty window".into()));
    }
    let field = schema
        .fields
        .get(field_idx)
        .ok_or_else(|| Error::Schema(format!("field index {field_idx} out of range")))?;
    match field.kind {
        FieldKind::Numerical { col, .. } => {
            if bins == 0 {
                return Err(Error::Parameter("bin count must be >= 1".into()));
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in numeric_values(wa, col).into_iter().chain(numeric_values(wb, col)) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            // Degenerate (constant) range: widen so a single bin holds the mass.
            if hi - lo < 1e-12 {
                lo -= 0.5;
                hi += 0.5;
            }
            let width = (hi - lo) / bins as f64;
            let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
            Ok(Support::Bins(edges))
        }
        FieldKind::Categorical { col, .. } => {
            let mut cats: Vec<u32> =
                wa.iter().chain(wb.iter()).map(|s| s.cat[col]).collect();
            cats.sort_unstable();
            cats.dedup();
            Ok(Support::Categories(cats))
        }
    }
}

/// Estimate one feature's distribution inside one window over a given
/// support. Probabilities are non-negative and sum to one.
pub fn estimate_distribution(
    window: &[Sample],
    schema: &FieldSchema,
    field_idx: usize,
    support: &Support,
) -> Result<WindowDistribution> {
    if window.is_empty() {
        return Err(Error::Data("cannot estimate a distribution over an empty window".into()));
    }
    let field = schema
        .fields
        .get(field_idx)
        .ok_or_else(|| Error::Schema(format!("field index {field_idx} out of range")))?;
    let probs = match (support, &field.kind) {
        (Support::Bins(edges), FieldKind::Numerical { col, .. }) => {
            let b = edges.len() - 1;
            let lo = edges[0];
            let hi = edges[b];
            let mut counts = vec![0.0; b];
            for v in numeric_values(window, *col) {
                let t = ((v - lo) / (hi - lo) * b as f64).floor();
                let idx = (t as i64).clamp(0, b as i64 - 1) as usize;
                counts[idx] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            counts.iter_mut().for_each(|c| *c /= total);
            counts
        }
        (Support::Categories(cats), FieldKind::Categorical { col, .. }) => {
            let mut counts = vec![0.0; cats.len()];
            for s in window {
                match cats.binary_search(&s.cat[*col]) {
                    Ok(i) => counts[i] += 1.0,
                    Err(_) => {
                        return Err(Error::Shape(format!(
                            "category {} of field '{}' missing from support",
                            s.cat[*col], field.name
                        )))
                    }
                }
            }
            let total: f64 = counts.iter().sum();
            counts.iter_mut().for_each(|c| *c /= total);
            counts
        }
        _ => {
            return Err(Error::Shape(format!(
                "support kind does not match field '{}'",
                field.name
            )))
        }
    };
    Ok(WindowDistribution { feature: field.name.clone(), support: support.clone(), probs })
}

fn kl_smoothed(p: &[f64], q: &[f64]) -> f64 {
    let norm = |xs: &[f64]| -> Vec<f64> {
        let total: f64 = xs.iter().map(|x| x + KL_EPS).sum();
        xs.iter().map(|x| (x + KL_EPS) / total).collect()
    };
    let ps = norm(p);
    let qs = norm(q);
    ps.iter().zip(&qs).map(|(&a, &b)| a * (a / b).ln()).sum()
}

fn kl_zero_convention(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// Divergence between two distributions on the same support. Natural log
/// throughout; JS is bounded by ln 2, KL is smoothed, and the 1-D Wasserstein
/// distance (CDF differences times bin width) applies to numerical features
/// only.
pub fn divergence(
    p: &WindowDistribution,
    q: &WindowDistribution,
    metric: DivergenceMetric,
) -> Result<f64> {
    if p.support != q.support {
        return Err(Error::Shape("divergence requires identical supports".into()));
    }
    if p.probs.len() != q.probs.len() {
        return Err(Error::Shape("probability vectors differ in length".into()));
    }
    let value = match metric {
        DivergenceMetric::Js => {
            let m: Vec<f64> =
                p.probs.iter().zip(&q.probs).map(|(&a, &b)| 0.5 * (a + b)).collect();
            0.5 * kl_zero_convention(&p.probs, &m) + 0.5 * kl_zero_convention(&q.probs, &m)
        }
        DivergenceMetric::Kl => kl_smoothed(&p.probs, &q.probs),
        DivergenceMetric::Wasserstein => match &p.support {
            Support::Bins(edges) => {
                let width = edges[1] - edges[0];
                let mut cdf_p = 0.0;
                let mut cdf_q = 0.0;
                let mut acc = 0.0;
                for (&a, &b) in p.probs.iter().zip(&q.probs) {
                    cdf_p += a;
                    cdf_q += b;
                    acc += (cdf_p - cdf_q).abs() * width;
                }
                acc
            }
            Support::Categories(_) => {
                return Err(Error::UnsupportedMetric(
                    "Wasserstein distance is undefined for categorical features without a \
                     ground metric; use JS instead"
                        .into(),
                ))
            }
        },
    };
    Ok(value.max(0.0))
}

/// Piecewise enhancement ratio: full `k` below `theta_low`, proportional
/// fade in the moderate band, zero above `theta_high`.
pub fn enhancement_ratio(delta: f64, theta_low: f64, theta_high: f64, k: f64) -> Result<f64> {
    if !(theta_low > 0.0 && theta_low < theta_high) {
        return Err(Error::Parameter(format!(
            "thresholds must satisfy 0 < theta_low < theta_high, got {theta_low} / {theta_high}"
        )));
    }
    if k < 0.0 {
        return Err(Error::Parameter(format!("max ratio k must be >= 0, got {k}")));
    }
    Ok(if delta <= theta_low {
        k
    } else if delta <= theta_high {
        k * (1.0 - delta / theta_high)
    } else {
        0.0
    })
}

/// Shift-detection settings; carries the thresholds so the report is
/// self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub n_windows: usize,
    pub bins: usize,
    pub metric: DivergenceMetric,
    pub theta_low: f64,
    pub theta_high: f64,
    pub k_max: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            n_windows: 10,
            bins: 50,
            metric: DivergenceMetric::Js,
            theta_low: 0.01,
            theta_high: 0.05,
            k_max: 0.1,
        }
    }
}

/// Full shift computation over a timestamp-sorted pool.
pub fn compute_shift(d_train: &[Sample], schema: &FieldSchema, cfg: &ShiftConfig) -> Result<ShiftReport> {
    if cfg.n_windows < 2 {
        return Err(Error::Parameter(
            "shift detection needs at least two windows (no adjacent pairs otherwise)".into(),
        ));
    }
    let windows = partition_windows(d_train, cfg.n_windows)?;
    let n_features = schema.n_fields();
    let mut per_pair: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_windows - 1);
    for i in 0..cfg.n_windows - 1 {
        let (wa, wb) = (windows[i], windows[i + 1]);
        let mut row = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let support = pooled_support(wa, wb, schema, f, cfg.bins)?;
            let pa = estimate_distribution(wa, schema, f, &support)?;
            let pb = estimate_distribution(wb, schema, f, &support)?;
            row.push(divergence(&pa, &pb, cfg.metric)?);
        }
        per_pair.push(row);
    }
    let per_pair_mean: Vec<f64> = per_pair
        .iter()
        .map(|row| row.iter().sum::<f64>() / n_features as f64)
        .collect();
    let delta_shift = per_pair_mean.iter().sum::<f64>() / per_pair_mean.len() as f64;
    let r_enh = enhancement_ratio(delta_shift, cfg.theta_low, cfg.theta_high, cfg.k_max)?;
    Ok(ShiftReport {
        metric: cfg.metric,
        n_windows: cfg.n_windows,
        bins: cfg.bins,
        n_features,
        feature_names: schema.fields.iter().map(|f| f.name.clone()).collect(),
        per_pair,
        per_pair_mean,
        delta_shift,
        theta_low: cfg.theta_low,
        theta_high: cfg.theta_high,
        k_max: cfg.k_max,
        r_enh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldSchema;

    fn schema_num() -> FieldSchema {
        FieldSchema::from_parts(&[], &["x"]).unwrap()
    }

    fn schema_cat() -> FieldSchema {
        FieldSchema::from_parts(&[("c", 8)], &[]).unwrap()
    }

    fn num_sample(x: f64, ts: i64) -> Sample {
        Sample { cat: vec![], num: vec![x], label: 0.0, soft: None, click: None, ts }
    }

    fn cat_sample(c: u32, ts: i64) -> Sample {
        Sample { cat: vec![c], num: vec![], label: 0.0, soft: None, click: None, ts }
    }

    #[test]
    fn partition_even_and_remainder() {
        let d: Vec<Sample> = (0..100).map(|i| num_sample(i as f64, i)).collect();
        let w = partition_windows(&d, 10).unwrap();
        assert!(w.iter().all(|x| x.len() == 10));

        let d: Vec<Sample> = (0..101).map(|i| num_sample(i as f64, i)).collect();
        let w = partition_windows(&d, 10).unwrap();
        let mut sizes: Vec<usize> = w.iter().map(|x| x.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 10, 10, 10, 10, 11]);
        // Contiguous and order-preserving.
        assert_eq!(w[0][0].ts, 0);
        assert_eq!(w[9].last().unwrap().ts, 100);
    }

    #[test]
    fn partition_rejects_bad_counts() {
        let d: Vec<Sample> = (0..5).map(|i| num_sample(0.0, i)).collect();
        assert!(matches!(partition_windows(&d, 6), Err(Error::Parameter(_))));
        assert!(matches!(partition_windows(&d, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn single_window_has_no_pairs() {
        let d: Vec<Sample> = (0..10).map(|i| num_sample(0.0, i)).collect();
        let cfg = ShiftConfig { n_windows: 1, ..ShiftConfig::default() };
        assert!(matches!(
            compute_shift(&d, &schema_num(), &cfg),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn constant_feature_is_a_point_mass() {
        let s = schema_num();
        let w: Vec<Sample> = (0..20).map(|i| num_sample(3.5, i)).collect();
        let support = pooled_support(&w, &w, &s, 0, 50).unwrap();
        let dist = estimate_distribution(&w, &s, 0, &support).unwrap();
        let occupied: Vec<f64> = dist.probs.iter().copied().filter(|&p| p > 0.0).collect();
        assert_eq!(occupied, vec![1.0]);
    }

    #[test]
    fn categorical_counting() {
        let s = schema_cat();
        let w = vec![cat_sample(1, 0), cat_sample(1, 1), cat_sample(2, 2), cat_sample(2, 3)];
        let support = pooled_support(&w, &w, &s, 0, 50).unwrap();
        let dist = estimate_distribution(&w, &s, 0, &support).unwrap();
        assert_eq!(dist.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn bin_edges_cover_extremes() {
        let s = schema_num();
        let wa: Vec<Sample> = vec![num_sample(0.0, 0), num_sample(10.0, 1)];
        let wb = vec![num_sample(0.05, 0), num_sample(9.99, 1)];
        let support = pooled_support(&wa, &wb, &s, 0, 50).unwrap();
        let dist = estimate_distribution(&wb, &s, 0, &support).unwrap();
        assert!(dist.probs[0] > 0.0);
        assert!(dist.probs[49] > 0.0);
        assert_eq!(dist.probs.iter().filter(|&&p| p > 0.0).count(), 2);
    }

    #[test]
    fn empty_window_is_data_error() {
        let s = schema_num();
        let w: Vec<Sample> = vec![num_sample(1.0, 0)];
        assert!(matches!(
            pooled_support(&[], &w, &s, 0, 10),
            Err(Error::Data(_))
        ));
    }

    fn dist_of(probs: Vec<f64>) -> WindowDistribution {
        WindowDistribution {
            feature: "c".into(),
            support: Support::Categories(vec![0, 1]),
            probs,
        }
    }

    #[test]
    fn divergences_vanish_on_identical_inputs() {
        let p = dist_of(vec![0.3, 0.7]);
        assert_eq!(divergence(&p, &p, DivergenceMetric::Js).unwrap(), 0.0);
        assert!(divergence(&p, &p, DivergenceMetric::Kl).unwrap().abs() < 1e-8);
        let pb = WindowDistribution {
            feature: "x".into(),
            support: Support::Bins(vec![0.0, 0.5, 1.0]),
            probs: vec![0.4, 0.6],
        };
        assert_eq!(divergence(&pb, &pb, DivergenceMetric::Wasserstein).unwrap(), 0.0);
    }

    #[test]
    fn js_hand_case() {
        // P = (1, 0), Q = (0.5, 0.5): JS = 0.5 KL(P||M) + 0.5 KL(Q||M) with
        // M = (0.75, 0.25), about 0.21576 nats.
        let p = dist_of(vec![1.0, 0.0]);
        let q = dist_of(vec![0.5, 0.5]);
        let js = divergence(&p, &q, DivergenceMetric::Js).unwrap();
        assert!((js - 0.2157615543).abs() < 1e-9, "js {js}");
    }

    #[test]
    fn js_disjoint_masses_hit_ln2() {
        let p = dist_of(vec![1.0, 0.0]);
        let q = dist_of(vec![0.0, 1.0]);
        let js = divergence(&p, &q, DivergenceMetric::Js).unwrap();
        assert!((js - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn js_symmetric_and_bounded() {
        let p = dist_of(vec![0.9, 0.1]);
        let q = dist_of(vec![0.2, 0.8]);
        let a = divergence(&p, &q, DivergenceMetric::Js).unwrap();
        let b = divergence(&q, &p, DivergenceMetric::Js).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 0.0 && a <= std::f64::consts::LN_2);
    }

    #[test]
    fn kl_nonnegative_and_finite_on_disjoint() {
        let p = dist_of(vec![1.0, 0.0]);
        let q = dist_of(vec![0.0, 1.0]);
        let kl = divergence(&p, &q, DivergenceMetric::Kl).unwrap();
        assert!(kl.is_finite());
        assert!(kl >= 0.0);
    }

    #[test]
    fn wasserstein_rejects_categorical() {
        let p = dist_of(vec![0.5, 0.5]);
        assert!(matches!(
            divergence(&p, &p, DivergenceMetric::Wasserstein),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn support_mismatch_is_shape_error() {
        let p = dist_of(vec![0.5, 0.5]);
        let q = WindowDistribution {
            feature: "c".into(),
            support: Support::Categories(vec![0, 2]),
            probs: vec![0.5, 0.5],
        };
        assert!(matches!(
            divergence(&p, &q, DivergenceMetric::Js),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn enhancement_piecewise_branches() {
        assert!((enhancement_ratio(0.004, 0.01, 0.05, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((enhancement_ratio(0.03, 0.01, 0.05, 0.1).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(enhancement_ratio(0.08, 0.01, 0.05, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn enhancement_rejects_bad_thresholds() {
        assert!(matches!(
            enhancement_ratio(0.1, 0.05, 0.05, 0.1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn enhancement_non_increasing() {
        let mut last = f64::INFINITY;
        for i in 0..200 {
            let delta = i as f64 * 0.001;
            let r = enhancement_ratio(delta, 0.01, 0.05, 0.1).unwrap();
            assert!(r <= last + 1e-15, "ratio increased at delta {delta}");
            last = r;
        }
    }

    #[test]
    fn duplicated_windows_give_exact_zero_shift() {
        let mut d = Vec::new();
        // Same 10 rows repeated: every window is identical.
        for rep in 0..4 {
            for i in 0..10 {
                d.push(cat_sample((i % 3) as u32, (rep * 10 + i) as i64));
            }
        }
        let cfg = ShiftConfig { n_windows: 4, bins: 8, ..ShiftConfig::default() };
        let rep = compute_shift(&d, &schema_cat(), &cfg).unwrap();
        assert_eq!(rep.delta_shift, 0.0);
        assert_eq!(rep.r_enh, 0.1);
    }

    #[test]
    fn aggregation_recomputes_from_table() {
        let mut d = Vec::new();
        for i in 0..200 {
            let c = if i < 100 { i % 3 } else { 5 + (i % 3) };
            d.push(cat_sample(c as u32, i as i64));
        }
        let cfg = ShiftConfig { n_windows: 4, bins: 8, ..ShiftConfig::default() };
        let rep = compute_shift(&d, &schema_cat(), &cfg).unwrap();
        let recomputed: f64 = rep
            .per_pair
            .iter()
            .map(|row| row.iter().sum::<f64>() / rep.n_features as f64)
            .sum::<f64>()
            / rep.per_pair.len() as f64;
        assert!((recomputed - rep.delta_shift).abs() < 1e-12);
        // The injected switch sits between windows 1 and 2.
        let max_pair = rep
            .per_pair_mean
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(max_pair, 1);
    }
}
