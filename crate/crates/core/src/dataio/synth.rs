//! Synthetic click/conversion stream generator with controllable drift.
//!
//! Labels come from a ground-truth sparse logistic model: one weight per
//! categorical token plus one weight per numerical field. Category tokens are
//! drawn from a long-tailed (Zipf-like) distribution behind a seeded
//! permutation, numerical features are lognormal, and the intercept is
//! calibrated by bisection so the stream hits the requested positive rate.
//! A drift event perturbs the label weights, optionally reshuffles the
//! per-field category frequencies (covariate shift), and recalibrates the
//! intercept so the base rate stays put while the feature-label relationship
//! and feature distributions move.

use serde::{Deserialize, Serialize};

use crate::dataio::RawSample;
use crate::error::{Error, Result};
use crate::model::losses::sigmoid;
use crate::rng::Rng64;

const STREAM_WEIGHTS: u64 = 0x10;
const STREAM_FREQS: u64 = 0x11;
const STREAM_MAIN: u64 = 0x12;
const STREAM_CALIB: u64 = 0x13;
const STREAM_DRIFT: u64 = 0x14;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftEvent {
    /// Position of the event as a fraction of the stream in [0, 1).
    pub start_fraction: f64,
    /// Scale of the Gaussian perturbation added to the label weights.
    pub weight_scale: f64,
    /// Reshuffle per-field category frequencies (covariate shift).
    pub reshuffle_categories: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub categorical_vocab_sizes: Vec<usize>,
    pub n_numerical_fields: usize,
    #[serde(default)]
    pub drift_schedule: Vec<DriftEvent>,
    pub base_positive_rate: f64,
    #[serde(default)]
    pub pcvr: bool,
    /// Click rate for pCVR mode.
    #[serde(default = "default_click_rate")]
    pub click_rate: f64,
    /// Scale of the ground-truth weights; larger means more learnable signal.
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    /// Rank of the ground-truth pairwise interaction term over categorical
    /// tokens (0 disables it). Interactions are what separate volume-trained
    /// models from cold-start recency learners.
    #[serde(default)]
    pub interaction_rank: usize,
    /// Scale of the per-token interaction latents.
    #[serde(default)]
    pub interaction_scale: f64,
    /// Zipf exponent of the per-field token frequency distributions; lower
    /// values flatten the tail so embedding coverage needs more data.
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
    /// hist : train : online : test.
    #[serde(default = "default_ratio")]
    pub split_ratio: [usize; 4],
    pub seed: u64,
}

fn default_click_rate() -> f64 {
    0.2
}

fn default_weight_scale() -> f64 {
    0.8
}

fn default_ratio() -> [usize; 4] {
    [4, 4, 1, 1]
}

fn default_zipf() -> f64 {
    1.1
}

impl SyntheticSpec {
    /// The default drift benchmark: 200k samples, long-tailed vocabularies,
    /// low-rank pairwise interactions in the label model, a mild reshuffling
    /// drift inside the train period and a stronger concept drift at the
    /// train/online boundary, so the stream opens in catch-up mode.
    pub fn default_benchmark(seed: u64) -> Self {
        SyntheticSpec {
            n_samples: 200_000,
            categorical_vocab_sizes: vec![1000, 500, 200, 100, 40, 20],
            n_numerical_fields: 2,
            drift_schedule: vec![
                DriftEvent { start_fraction: 0.6, weight_scale: 0.12, reshuffle_categories: true },
                DriftEvent { start_fraction: 0.75, weight_scale: 0.35, reshuffle_categories: false },
            ],
            base_positive_rate: 0.25,
            pcvr: false,
            click_rate: 0.2,
            weight_scale: 0.8,
            interaction_rank: 4,
            interaction_scale: 0.3,
            zipf_exponent: 0.9,
            split_ratio: [8, 6, 3, 1],
            seed,
        }
    }

    /// pCVR variant of the benchmark: a click layer above the conversion
    /// layer, unclicked rows retained for augmentation.
    pub fn default_pcvr_benchmark(seed: u64) -> Self {
        SyntheticSpec {
            n_samples: 100_000,
            pcvr: true,
            click_rate: 0.2,
            base_positive_rate: 0.25,
            drift_schedule: vec![],
            ..Self::default_benchmark(seed)
        }
    }

    pub fn cat_names(&self) -> Vec<String> {
        (0..self.categorical_vocab_sizes.len()).map(|i| format!("c{i}")).collect()
    }

    pub fn num_names(&self) -> Vec<String> {
        (0..self.n_numerical_fields).map(|i| format!("n{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Parameter("n_samples must be positive".into()));
        }
        if self.categorical_vocab_sizes.is_empty() && self.n_numerical_fields == 0 {
            return Err(Error::Parameter("at least one feature field required".into()));
        }
        if self.categorical_vocab_sizes.iter().any(|&v| v < 2) {
            return Err(Error::Parameter("categorical vocab sizes must be >= 2".into()));
        }
        if !(self.base_positive_rate > 0.0 && self.base_positive_rate < 1.0) {
            return Err(Error::Parameter(format!(
                "base_positive_rate must be in (0,1), got {}",
                self.base_positive_rate
            )));
        }
        if self.pcvr && !(self.click_rate > 0.0 && self.click_rate < 1.0) {
            return Err(Error::Parameter(format!(
                "click_rate must be in (0,1), got {}",
                self.click_rate
            )));
        }
        let mut last = -1.0;
        for ev in &self.drift_schedule {
            if !(0.0..1.0).contains(&ev.start_fraction) || ev.start_fraction <= last {
                return Err(Error::Parameter(
                    "drift start fractions must be strictly increasing in [0,1)".into(),
                ));
            }
            last = ev.start_fraction;
        }
        Ok(())
    }
}

/// Per-field sampling distribution: a Zipf-like CDF over a permutation of
/// token ids.
#[derive(Clone)]
struct FieldDist {
    cdf: Vec<f64>,
    perm: Vec<u32>,
}

impl FieldDist {
    fn new(vocab: usize, exponent: f64, rng: &mut Rng64) -> Self {
        let mut mass: Vec<f64> =
            (0..vocab).map(|t| 1.0 / (t as f64 + 1.0).powf(exponent)).collect();
        let total: f64 = mass.iter().sum();
        let mut acc = 0.0;
        for m in &mut mass {
            acc += *m / total;
            *m = acc;
        }
        let mut perm: Vec<u32> = (0..vocab as u32).collect();
        rng.shuffle(&mut perm);
        FieldDist { cdf: mass, perm }
    }

    fn reshuffle(&mut self, rng: &mut Rng64) {
        rng.shuffle(&mut self.perm);
    }

    fn draw(&self, rng: &mut Rng64) -> u32 {
        let u = rng.next_f64();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.perm[idx]
    }
}

/// Ground-truth logistic model: first-order weights over one-hot tokens and
/// numeric fields, plus an optional low-rank pairwise interaction term over
/// categorical tokens.
#[derive(Clone)]
struct TruthModel {
    cat_w: Vec<Vec<f64>>,
    num_w: Vec<f64>,
    /// `[field][token][k]` interaction latents (empty when rank 0).
    latent: Vec<Vec<Vec<f64>>>,
    /// Ratio of latent scale to first-order scale; drift perturbs each
    /// parameter class proportionally to its own base scale.
    latent_ratio: f64,
    bias: f64,
}

impl TruthModel {
    fn new(spec: &SyntheticSpec, rng: &mut Rng64) -> Self {
        let cat_w: Vec<Vec<f64>> = spec
            .categorical_vocab_sizes
            .iter()
            .map(|&v| (0..v).map(|_| rng.next_normal() * spec.weight_scale).collect())
            .collect();
        let num_w =
            (0..spec.n_numerical_fields).map(|_| rng.next_normal() * spec.weight_scale).collect();
        let latent = if spec.interaction_rank > 0 {
            spec.categorical_vocab_sizes
                .iter()
                .map(|&v| {
                    (0..v)
                        .map(|_| {
                            (0..spec.interaction_rank)
                                .map(|_| rng.next_normal() * spec.interaction_scale)
                                .collect()
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let latent_ratio = if spec.weight_scale > 0.0 {
            spec.interaction_scale / spec.weight_scale
        } else {
            1.0
        };
        TruthModel { cat_w, num_w, latent, latent_ratio, bias: 0.0 }
    }

    fn perturb(&mut self, scale: f64, rng: &mut Rng64) {
        for field in &mut self.cat_w {
            for w in field.iter_mut() {
                *w += rng.next_normal() * scale;
            }
        }
        for w in &mut self.num_w {
            *w += rng.next_normal() * scale;
        }
        let lscale = scale * self.latent_ratio;
        for field in &mut self.latent {
            for tok in field.iter_mut() {
                for z in tok.iter_mut() {
                    *z += rng.next_normal() * lscale;
                }
            }
        }
    }

    fn score(&self, toks: &[u32], gs: &[f64]) -> f64 {
        let mut u = self.bias;
        for (f, &t) in toks.iter().enumerate() {
            u += self.cat_w[f][t as usize];
        }
        for (j, &g) in gs.iter().enumerate() {
            u += self.num_w[j] * g;
        }
        if !self.latent.is_empty() {
            // sum_{f < f'} <z_f, z_f'> via the square-of-sums identity.
            let rank = self.latent[0].first().map(|z| z.len()).unwrap_or(0);
            for k in 0..rank {
                let mut s = 0.0;
                let mut sq = 0.0;
                for (f, &t) in toks.iter().enumerate() {
                    let z = self.latent[f][t as usize][k];
                    s += z;
                    sq += z * z;
                }
                u += 0.5 * (s * s - sq);
            }
        }
        u
    }

    /// Bisect the intercept so the (optionally weighted) mean predicted rate
    /// over a calibration draw matches the target. pCVR conversion models are
    /// weighted by the click propensity so the target is the conversion rate
    /// among clicked exposures, which is what the training pool observes.
    fn calibrate(
        &mut self,
        dists: &[FieldDist],
        n_num: usize,
        target: f64,
        rng: &mut Rng64,
        weight_model: Option<&TruthModel>,
    ) {
        const CALIB_DRAWS: usize = 4000;
        let mut scores = Vec::with_capacity(CALIB_DRAWS);
        let mut weights = Vec::with_capacity(CALIB_DRAWS);
        for _ in 0..CALIB_DRAWS {
            let toks: Vec<u32> = dists.iter().map(|d| d.draw(rng)).collect();
            let gs: Vec<f64> = (0..n_num).map(|_| rng.next_normal()).collect();
            let mut u = 0.0;
            for (f, &t) in toks.iter().enumerate() {
                u += self.cat_w[f][t as usize];
            }
            for (j, &g) in gs.iter().enumerate() {
                u += self.num_w[j] * g;
            }
            scores.push(u);
            weights.push(match weight_model {
                Some(m) => sigmoid(m.score(&toks, &gs)),
                None => 1.0,
            });
        }
        let total_w: f64 = weights.iter().sum();
        let rate_at = |b: f64| -> f64 {
            scores
                .iter()
                .zip(&weights)
                .map(|(&u, &w)| w * sigmoid(u + b))
                .sum::<f64>()
                / total_w
        };
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if rate_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.bias = 0.5 * (lo + hi);
    }
}

/// Generate the stream. Deterministic for a fixed spec: identical specs
/// produce byte-identical CSV output downstream.
pub fn generate_stream(spec: &SyntheticSpec) -> Result<Vec<RawSample>> {
    spec.validate()?;
    let n_num = spec.n_numerical_fields;

    let mut wrng = Rng64::seeded(spec.seed, STREAM_WEIGHTS);
    let mut frng = Rng64::seeded(spec.seed, STREAM_FREQS);
    let mut main = Rng64::seeded(spec.seed, STREAM_MAIN);
    let mut calib = Rng64::seeded(spec.seed, STREAM_CALIB);
    let mut drift_rng = Rng64::seeded(spec.seed, STREAM_DRIFT);

    let mut dists: Vec<FieldDist> = spec
        .categorical_vocab_sizes
        .iter()
        .map(|&v| FieldDist::new(v, spec.zipf_exponent, &mut frng))
        .collect();

    let mut conv = TruthModel::new(spec, &mut wrng);
    let mut click = if spec.pcvr {
        let mut m = TruthModel::new(spec, &mut wrng);
        m.calibrate(&dists, n_num, spec.click_rate, &mut calib, None);
        Some(m)
    } else {
        None
    };
    conv.calibrate(&dists, n_num, spec.base_positive_rate, &mut calib, click.as_ref());

    let mut drift_points: Vec<(usize, &DriftEvent)> = spec
        .drift_schedule
        .iter()
        .map(|ev| ((ev.start_fraction * spec.n_samples as f64).floor() as usize, ev))
        .collect();
    drift_points.reverse(); // pop from the back in ascending order

    let mut out = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        while let Some(&(at, ev)) = drift_points.last() {
            if i < at {
                break;
            }
            drift_points.pop();
            if ev.reshuffle_categories {
                for d in &mut dists {
                    d.reshuffle(&mut drift_rng);
                }
            }
            if let Some(c) = &mut click {
                c.perturb(ev.weight_scale, &mut drift_rng);
                c.calibrate(&dists, n_num, spec.click_rate, &mut calib, None);
            }
            conv.perturb(ev.weight_scale, &mut drift_rng);
            conv.calibrate(&dists, n_num, spec.base_positive_rate, &mut calib, click.as_ref());
            log::info!("drift event applied at sample {at}");
        }

        let toks: Vec<u32> = dists.iter().map(|d| d.draw(&mut main)).collect();
        let gs: Vec<f64> = (0..n_num).map(|_| main.next_normal()).collect();
        // The observable numerical feature is lognormal; the ground truth
        // uses the underlying normal.
        let xs: Vec<f64> = gs.iter().map(|&g| g.exp()).collect();

        let (label, click_val) = match &click {
            Some(cm) => {
                let clicked = main.next_f64() < sigmoid(cm.score(&toks, &gs));
                let conv_label = if clicked {
                    f64::from(main.next_f64() < sigmoid(conv.score(&toks, &gs)))
                } else {
                    // Burn one draw so the stream is insensitive to click
                    // outcomes; the conversion is unobserved.
                    let _ = main.next_f64();
                    0.0
                };
                (conv_label, Some(f64::from(clicked)))
            }
            None => (f64::from(main.next_f64() < sigmoid(conv.score(&toks, &gs))), None),
        };

        out.push(RawSample {
            cat: toks.iter().map(|t| t.to_string()).collect(),
            num: xs,
            label,
            click: click_val,
            ts: i as i64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_samples: 5000,
            categorical_vocab_sizes: vec![30, 10],
            n_numerical_fields: 2,
            drift_schedule: vec![],
            base_positive_rate: 0.25,
            pcvr: false,
            click_rate: 0.2,
            weight_scale: 0.8,
            interaction_rank: 0,
            interaction_scale: 0.0,
            zipf_exponent: 1.1,
            split_ratio: [4, 4, 1, 1],
            seed: 7,
        }
    }

    #[test]
    fn deterministic_for_fixed_spec() {
        let a = generate_stream(&small_spec()).unwrap();
        let b = generate_stream(&small_spec()).unwrap();
        assert_eq!(a, b);
        let mut other = small_spec();
        other.seed = 8;
        let c = generate_stream(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn positive_rate_calibrates() {
        let mut spec = small_spec();
        spec.n_samples = 200_000;
        spec.base_positive_rate = 0.03;
        let rows = generate_stream(&spec).unwrap();
        let rate = rows.iter().map(|r| r.label).sum::<f64>() / rows.len() as f64;
        assert!((rate - 0.03).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn timestamps_are_monotone() {
        let rows = generate_stream(&small_spec()).unwrap();
        assert!(rows.windows(2).all(|w| w[0].ts < w[1].ts));
    }

    #[test]
    fn pcvr_mode_marks_clicks_and_hides_unclicked_conversions() {
        let mut spec = small_spec();
        spec.pcvr = true;
        spec.click_rate = 0.3;
        let rows = generate_stream(&spec).unwrap();
        let clicks: f64 = rows.iter().map(|r| r.click.unwrap()).sum();
        let rate = clicks / rows.len() as f64;
        assert!((rate - 0.3).abs() < 0.05, "click rate {rate}");
        // Unclicked rows never carry a positive conversion label.
        assert!(rows
            .iter()
            .filter(|r| r.click.unwrap() == 0.0)
            .all(|r| r.label == 0.0));
        // Conversion rate among clicked stays near the base rate.
        let clicked: Vec<_> = rows.iter().filter(|r| r.click.unwrap() == 1.0).collect();
        let conv = clicked.iter().map(|r| r.label).sum::<f64>() / clicked.len() as f64;
        assert!((conv - 0.25).abs() < 0.08, "conversion rate {conv}");
    }

    #[test]
    fn drift_validation() {
        let mut spec = small_spec();
        spec.drift_schedule = vec![
            DriftEvent { start_fraction: 0.5, weight_scale: 0.5, reshuffle_categories: true },
            DriftEvent { start_fraction: 0.4, weight_scale: 0.5, reshuffle_categories: true },
        ];
        assert!(matches!(generate_stream(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn drift_moves_category_frequencies() {
        let mut spec = small_spec();
        spec.n_samples = 20_000;
        spec.drift_schedule = vec![DriftEvent {
            start_fraction: 0.5,
            weight_scale: 0.5,
            reshuffle_categories: true,
        }];
        let rows = generate_stream(&spec).unwrap();
        let count_token = |slice: &[RawSample], tok: &str| -> usize {
            slice.iter().filter(|r| r.cat[0] == tok).count()
        };
        // Find the most common pre-drift token; its post-drift frequency
        // should change noticeably after a reshuffle.
        let pre = &rows[..10_000];
        let post = &rows[10_000..];
        let mut counts: std::collections::HashMap<&str, usize> = Default::default();
        for r in pre {
            *counts.entry(r.cat[0].as_str()).or_default() += 1;
        }
        let (top, top_count) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
        let post_count = count_token(post, top);
        let ratio = post_count as f64 / *top_count as f64;
        assert!(
            !(0.7..=1.3).contains(&ratio),
            "top token frequency barely moved: {top_count} -> {post_count}"
        );
    }
}
