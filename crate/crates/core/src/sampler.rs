//! Strategic distillation sample selection: class-balanced draws, temporal
//! diversity blocks, and unclicked-sample augmentation with teacher
//! pseudo-labels.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PredictionModel, Sample, SampleBatch};
use crate::rng::Rng64;
use crate::util::round_half_up;

const STREAM_SAMPLER: u64 = 0x5a;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Overall sampling ratio in (0, 1].
    pub r: f64,
    /// Target positive ratio in (0, 1).
    pub r_pos: f64,
    /// Number of temporal blocks.
    pub k_blocks: usize,
    /// Unclicked-to-sampled ratio for pCVR augmentation.
    pub r_unclick: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { r: 0.1, r_pos: 0.5, k_blocks: 10, r_unclick: 0.0, seed: 0 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Parameter(format!("r must be in (0,1], got {}", self.r)));
        }
        if !(self.r_pos > 0.0 && self.r_pos < 1.0) {
            return Err(Error::Parameter(format!("r_pos must be in (0,1), got {}", self.r_pos)));
        }
        if self.k_blocks == 0 {
            return Err(Error::Parameter("k_blocks must be >= 1".into()));
        }
        if self.r_unclick < 0.0 {
            return Err(Error::Parameter(format!("r_unclick must be >= 0, got {}", self.r_unclick)));
        }
        Ok(())
    }
}

/// Per-block draw accounting for the audit file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockStat {
    pub block_id: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_pseudo: usize,
}

/// Block-ordered sample store produced by the sampler. Pseudo-labeled rows
/// are appended at the end and carry `soft` targets.
#[derive(Debug, Clone)]
pub struct SampledDataset {
    pub samples: Vec<Sample>,
    pub block_stats: Vec<BlockStat>,
}

impl SampledDataset {
    /// Wrap a plain sample list as one block (used when training on the full
    /// pool without strategic sampling).
    pub fn single_block(samples: Vec<Sample>) -> Self {
        let n_pos = samples.iter().filter(|s| s.label > 0.5).count();
        let stats = BlockStat {
            block_id: 0,
            n_pos,
            n_neg: samples.len() - n_pos,
            n_pseudo: 0,
        };
        SampledDataset { samples, block_stats: vec![stats] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_pseudo(&self) -> usize {
        self.samples.iter().filter(|s| s.is_pseudo()).count()
    }

    /// Write the audit CSV: block_id, n_pos, n_neg, n_pseudo.
    pub fn write_audit(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "block_id,n_pos,n_neg,n_pseudo")?;
        for b in &self.block_stats {
            writeln!(f, "{},{},{},{}", b.block_id, b.n_pos, b.n_neg, b.n_pseudo)?;
        }
        Ok(())
    }
}

fn sample_n_with_rng(pool: &[Sample], n: usize, rng: &mut Rng64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(Error::Data("cannot sample from an empty pool".into()));
    }
    if n <= pool.len() {
        // Partial Fisher-Yates over indices: uniform without replacement.
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        for i in 0..n {
            let j = i + rng.gen_below((pool.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        Ok(idx[..n].iter().map(|&i| pool[i].clone()).collect())
    } else {
        Ok((0..n)
            .map(|_| pool[rng.gen_below(pool.len() as u64) as usize].clone())
            .collect())
    }
}

/// Uniform draw of `n` samples: without replacement while the quota fits the
/// pool, with replacement beyond that. Deterministic under `seed`.
pub fn sample_n(pool: &[Sample], n: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = Rng64::seeded(seed, STREAM_SAMPLER);
    sample_n_with_rng(pool, n, &mut rng)
}

fn split_classes(pool: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in pool {
        if s.label > 0.5 {
            pos.push(s.clone());
        } else {
            neg.push(s.clone());
        }
    }
    (pos, neg)
}

/// Class-balanced draw over the whole pool: `round(r * r_pos * |D|)`
/// positives and `round(r * (1 - r_pos) * |D|)` negatives.
pub fn class_balanced_sample(
    d_train: &[Sample],
    cfg: &SamplingConfig,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    cfg.validate()?;
    let (pos, neg) = split_classes(d_train);
    if pos.is_empty() {
        return Err(Error::Data("class-balanced sampling: no positive samples in pool".into()));
    }
    if neg.is_empty() {
        return Err(Error::Data("class-balanced sampling: no negative samples in pool".into()));
    }
    let total = d_train.len() as f64;
    let n_pos = round_half_up(cfg.r * cfg.r_pos * total);
    let n_neg = round_half_up(cfg.r * (1.0 - cfg.r_pos) * total);
    let mut rng = Rng64::seeded(cfg.seed, STREAM_SAMPLER);
    let pos_draw = sample_n_with_rng(&pos, n_pos, &mut rng)?;
    let neg_draw = sample_n_with_rng(&neg, n_neg, &mut rng)?;
    Ok((pos_draw, neg_draw))
}

/// Contiguous near-equal chunks; the first `len % k` chunks take the extra
/// element. Shared with window partitioning so block boundaries agree.
pub(crate) fn chunk_ranges(len: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / k;
    let rem = len % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < rem);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Temporal diversity sampling: partition the (timestamp-sorted) pool into
/// `K` equal blocks and draw each block's class quotas independently. A block
/// without positives borrows from the nearest block that has them; this is
/// logged rather than fatal because real temporal blocks can lack
/// conversions.
pub fn temporal_diversity_sample(d_train: &[Sample], cfg: &SamplingConfig) -> Result<SampledDataset> {
    cfg.validate()?;
    if d_train.is_empty() {
        return Err(Error::Data("temporal sampling on an empty pool".into()));
    }
    let mut sorted: Vec<Sample> = d_train.to_vec();
    sorted.sort_by_key(|s| s.ts);

    let k = cfg.k_blocks.min(sorted.len());
    let ranges = chunk_ranges(sorted.len(), k);
    let total = sorted.len() as f64;
    let quota_pos = round_half_up(cfg.r * cfg.r_pos * total / k as f64);
    let quota_neg = round_half_up(cfg.r * (1.0 - cfg.r_pos) * total / k as f64);

    let blocks: Vec<(Vec<Sample>, Vec<Sample>)> =
        ranges.iter().map(|r| split_classes(&sorted[r.clone()])).collect();

    let any_pos = blocks.iter().any(|(p, _)| !p.is_empty());
    let any_neg = blocks.iter().any(|(_, n)| !n.is_empty());
    if quota_pos > 0 && !any_pos {
        return Err(Error::Data("temporal sampling: no positive samples in any block".into()));
    }
    if quota_neg > 0 && !any_neg {
        return Err(Error::Data("temporal sampling: no negative samples in any block".into()));
    }

    let nearest_nonempty = |blocks: &[(Vec<Sample>, Vec<Sample>)], at: usize, pos: bool| -> usize {
        let mut best = at;
        let mut best_dist = usize::MAX;
        for (i, b) in blocks.iter().enumerate() {
            let nonempty = if pos { !b.0.is_empty() } else { !b.1.is_empty() };
            if nonempty {
                let dist = at.abs_diff(i);
                if dist < best_dist {
                    best = i;
                    best_dist = dist;
                }
            }
        }
        best
    };

    let mut rng = Rng64::seeded(cfg.seed, STREAM_SAMPLER);
    let mut samples = Vec::with_capacity((quota_pos + quota_neg) * k);
    let mut block_stats = Vec::with_capacity(k);
    for (bi, block) in blocks.iter().enumerate() {
        let mut n_pos_drawn = 0;
        let mut n_neg_drawn = 0;
        if quota_pos > 0 {
            let src = if block.0.is_empty() {
                let donor = nearest_nonempty(&blocks, bi, true);
                log::warn!("block {bi} has no positives; borrowing from block {donor}");
                &blocks[donor].0
            } else {
                &block.0
            };
            let drawn = sample_n_with_rng(src, quota_pos, &mut rng)?;
            n_pos_drawn = drawn.len();
            samples.extend(drawn);
        }
        if quota_neg > 0 {
            let src = if block.1.is_empty() {
                let donor = nearest_nonempty(&blocks, bi, false);
                log::warn!("block {bi} has no negatives; borrowing from block {donor}");
                &blocks[donor].1
            } else {
                &block.1
            };
            let drawn = sample_n_with_rng(src, quota_neg, &mut rng)?;
            n_neg_drawn = drawn.len();
            samples.extend(drawn);
        }
        block_stats.push(BlockStat { block_id: bi, n_pos: n_pos_drawn, n_neg: n_neg_drawn, n_pseudo: 0 });
    }
    Ok(SampledDataset { samples, block_stats })
}

/// Append unclicked exposures with teacher pseudo-labels. The teacher's
/// conversion probability becomes the row's soft target; those rows train
/// through the soft cross-entropy only, never the hard-label BCE.
pub fn unclicked_augment(
    mut d_sampled: SampledDataset,
    d_unclick: &[Sample],
    teacher: &PredictionModel,
    cfg: &SamplingConfig,
) -> Result<SampledDataset> {
    cfg.validate()?;
    let n_aug = round_half_up(cfg.r_unclick * d_sampled.len() as f64);
    if n_aug == 0 {
        return Ok(d_sampled);
    }
    if d_unclick.is_empty() {
        return Err(Error::Data(
            "unclicked augmentation requested but the unclicked pool is empty".into(),
        ));
    }
    let mut rng = Rng64::seeded(cfg.seed, STREAM_SAMPLER.wrapping_add(1));
    let mut drawn = sample_n_with_rng(d_unclick, n_aug, &mut rng)?;
    let batch = SampleBatch::from_samples(&teacher.schema, &drawn)?;
    let fwd = teacher.forward(&batch)?;
    for (row, p) in drawn.iter_mut().zip(fwd.probs) {
        row.soft = Some(p);
        row.label = 0.0;
    }
    let next_block = d_sampled.block_stats.len();
    d_sampled.block_stats.push(BlockStat {
        block_id: next_block,
        n_pos: 0,
        n_neg: 0,
        n_pseudo: drawn.len(),
    });
    d_sampled.samples.extend(drawn);
    Ok(d_sampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchKind, FieldSchema};

    fn pool(n: usize, pos_every: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                cat: vec![(i % 4) as u32],
                num: vec![],
                label: if pos_every > 0 && i % pos_every == 0 { 1.0 } else { 0.0 },
                soft: None,
                click: None,
                ts: i as i64,
            })
            .collect()
    }

    #[test]
    fn sample_n_zero_is_empty() {
        let p = pool(10, 2);
        assert!(sample_n(&p, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn sample_n_exhaustive_is_permutation() {
        let p = pool(20, 3);
        let drawn = sample_n(&p, 20, 5).unwrap();
        let mut got: Vec<i64> = drawn.iter().map(|s| s.ts).collect();
        got.sort_unstable();
        assert_eq!(got, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn sample_n_with_replacement_counts_sum() {
        let p = pool(5, 2);
        let drawn = sample_n(&p, 15, 9).unwrap();
        assert_eq!(drawn.len(), 15);
        // With 3x oversampling every element almost surely appears.
        let mut seen = [false; 5];
        for s in &drawn {
            seen[s.ts as usize] = true;
        }
        assert!(seen.iter().filter(|&&b| b).count() >= 4);
    }

    #[test]
    fn sample_n_empty_pool_is_data_error() {
        assert!(matches!(sample_n(&[], 3, 1), Err(Error::Data(_))));
    }

    #[test]
    fn sample_n_deterministic_under_seed() {
        let p = pool(50, 2);
        let a = sample_n(&p, 10, 42).unwrap();
        let b = sample_n(&p, 10, 42).unwrap();
        assert_eq!(
            a.iter().map(|s| s.ts).collect::<Vec<_>>(),
            b.iter().map(|s| s.ts).collect::<Vec<_>>()
        );
    }

    #[test]
    fn class_balanced_hand_counts() {
        let p = pool(1000, 4); // 250 positives
        let cfg = SamplingConfig { r: 0.1, r_pos: 0.5, k_blocks: 1, r_unclick: 0.0, seed: 3 };
        let (pos, neg) = class_balanced_sample(&p, &cfg).unwrap();
        assert_eq!(pos.len(), 50);
        assert_eq!(neg.len(), 50);
        assert!(pos.iter().all(|s| s.label == 1.0));
        assert!(neg.iter().all(|s| s.label == 0.0));
    }

    #[test]
    fn class_balanced_identity_composition() {
        let p = pool(100, 4); // 25 positives
        let cfg = SamplingConfig { r: 1.0, r_pos: 0.25, k_blocks: 1, r_unclick: 0.0, seed: 3 };
        let (pos, neg) = class_balanced_sample(&p, &cfg).unwrap();
        assert_eq!(pos.len(), 25);
        assert_eq!(neg.len(), 75);
    }

    #[test]
    fn class_balanced_small_pool_uses_replacement() {
        let p = pool(10, 5); // 2 positives
        let cfg = SamplingConfig { r: 0.5, r_pos: 0.5, k_blocks: 1, r_unclick: 0.0, seed: 3 };
        let (pos, _) = class_balanced_sample(&p, &cfg).unwrap();
        assert!(pos.len() == 2 || pos.len() == 3, "got {}", pos.len());
        assert!(pos.iter().all(|s| s.label == 1.0));
    }

    #[test]
    fn class_balanced_single_class_names_missing_side() {
        let p = pool(10, 1); // all positive
        let cfg = SamplingConfig::default();
        match class_balanced_sample(&p, &cfg) {
            Err(Error::Data(msg)) => assert!(msg.contains("negative")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn temporal_quota_arithmetic() {
        let p = pool(1000, 2);
        let cfg = SamplingConfig { r: 0.1, r_pos: 0.5, k_blocks: 5, r_unclick: 0.0, seed: 1 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.block_stats.len(), 5);
        for b in &ds.block_stats {
            assert_eq!(b.n_pos, 10);
            assert_eq!(b.n_neg, 10);
        }
    }

    #[test]
    fn temporal_output_preserves_block_order() {
        let p = pool(100, 2);
        let cfg = SamplingConfig { r: 0.2, r_pos: 0.5, k_blocks: 4, r_unclick: 0.0, seed: 8 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        // Each block spans 25 timestamps; drawn rows must come from
        // non-decreasing block windows.
        let mut last_block = 0;
        for s in &ds.samples {
            let block = (s.ts / 25) as usize;
            assert!(block >= last_block || block + 1 == last_block + 1);
            last_block = last_block.max(block);
        }
        assert_eq!(last_block, 3);
    }

    #[test]
    fn temporal_one_sample_blocks_respect_quotas() {
        let p = pool(10, 2);
        let cfg = SamplingConfig { r: 1.0, r_pos: 0.5, k_blocks: 10, r_unclick: 0.0, seed: 2 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        // Quotas are round(0.5) = 1 positive and 1 negative per block
        // (borrowed where the single-row block lacks the class).
        assert_eq!(ds.len(), 20);
        for b in &ds.block_stats {
            assert!(b.n_pos <= 1 && b.n_neg <= 1);
        }
    }

    #[test]
    fn temporal_single_block_matches_class_balanced_sizes() {
        let p = pool(200, 4);
        let cfg = SamplingConfig { r: 0.1, r_pos: 0.5, k_blocks: 1, r_unclick: 0.0, seed: 4 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        let (pos, neg) = class_balanced_sample(&p, &cfg).unwrap();
        assert_eq!(ds.len(), pos.len() + neg.len());
    }

    #[test]
    fn size_and_composition_laws() {
        let p = pool(977, 3);
        for k in [1usize, 4, 9] {
            let cfg = SamplingConfig { r: 0.2, r_pos: 0.4, k_blocks: k, r_unclick: 0.0, seed: 6 };
            let ds = temporal_diversity_sample(&p, &cfg).unwrap();
            let expect = 0.2 * 977.0;
            assert!(
                (ds.len() as f64) >= expect - k as f64 && (ds.len() as f64) <= expect + k as f64,
                "k {k}: size {}",
                ds.len()
            );
            let n_pos: usize = ds.block_stats.iter().map(|b| b.n_pos).sum();
            let frac = n_pos as f64 / ds.len() as f64;
            assert!((frac - 0.4).abs() <= (1.0 / k as f64).max(0.06), "k {k}: pos frac {frac}");
            // Every block contributes.
            assert!(ds.block_stats.iter().all(|b| b.n_pos + b.n_neg >= 1));
        }
    }

    fn teacher_for(schema: &FieldSchema) -> PredictionModel {
        PredictionModel::init(schema.clone(), ArchKind::Mlp, 2, &[3], 5).unwrap()
    }

    #[test]
    fn unclick_augment_noop_at_zero_ratio() {
        let schema = FieldSchema::from_parts(&[("f", 4)], &[]).unwrap();
        let teacher = teacher_for(&schema);
        let p = pool(100, 2);
        let cfg = SamplingConfig { r: 0.5, r_pos: 0.5, k_blocks: 2, r_unclick: 0.0, seed: 5 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        let before = ds.len();
        let out = unclicked_augment(ds, &p, &teacher, &cfg).unwrap();
        assert_eq!(out.len(), before);
        assert_eq!(out.n_pseudo(), 0);
    }

    #[test]
    fn unclick_augment_counts_and_range() {
        let schema = FieldSchema::from_parts(&[("f", 4)], &[]).unwrap();
        let teacher = teacher_for(&schema);
        let p = pool(200, 2);
        let cfg = SamplingConfig { r: 0.5, r_pos: 0.5, k_blocks: 2, r_unclick: 0.5, seed: 5 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        let before = ds.len();
        let unclick = pool(50, 0);
        let out = unclicked_augment(ds, &unclick, &teacher, &cfg).unwrap();
        assert_eq!(out.len() - before, round_half_up(0.5 * before as f64));
        assert_eq!(out.n_pseudo(), out.len() - before);
        for s in out.samples.iter().filter(|s| s.is_pseudo()) {
            let sl = s.soft.unwrap();
            assert!(sl > 0.0 && sl < 1.0);
        }
        // Pseudo rows appended after the sampled blocks.
        assert!(out.samples[..before].iter().all(|s| !s.is_pseudo()));
    }

    #[test]
    fn unclick_augment_zero_net_teacher_gives_half() {
        let schema = FieldSchema::from_parts(&[("f", 4)], &[]).unwrap();
        let mut teacher = teacher_for(&schema);
        for l in &mut teacher.net.layers {
            for w in l.w.data_mut() {
                *w = 0.0;
            }
            for b in &mut l.b {
                *b = 0.0;
            }
        }
        let p = pool(40, 2);
        let cfg = SamplingConfig { r: 0.5, r_pos: 0.5, k_blocks: 2, r_unclick: 1.0, seed: 5 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        let out = unclicked_augment(ds, &p, &teacher, &cfg).unwrap();
        for s in out.samples.iter().filter(|s| s.is_pseudo()) {
            assert_eq!(s.soft.unwrap(), 0.5);
        }
    }

    #[test]
    fn unclick_augment_empty_pool_is_data_error() {
        let schema = FieldSchema::from_parts(&[("f", 4)], &[]).unwrap();
        let teacher = teacher_for(&schema);
        let p = pool(40, 2);
        let cfg = SamplingConfig { r: 0.5, r_pos: 0.5, k_blocks: 2, r_unclick: 1.0, seed: 5 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        assert!(matches!(
            unclicked_augment(ds, &[], &teacher, &cfg),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn audit_file_round_trip() {
        let p = pool(100, 2);
        let cfg = SamplingConfig { r: 0.2, r_pos: 0.5, k_blocks: 4, r_unclick: 0.0, seed: 5 };
        let ds = temporal_diversity_sample(&p, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.csv");
        ds.write_audit(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("block_id,n_pos,n_neg,n_pseudo"));
        assert_eq!(text.lines().count(), 5);
    }
}
