//! Data plumbing: synthetic stream generation, CSV ingestion, preprocessing
//! (vocabulary + numeric transform), and temporal splitting.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, write_csv, SchemaConfig};
pub use synth::{generate_stream, DriftEvent, SyntheticSpec};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FieldDecl, FieldSchema, Sample};
use crate::offline::TrainerMode;

/// A sample before vocabulary encoding: categorical values are raw tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub cat: Vec<String>,
    pub num: Vec<f64>,
    pub label: f64,
    pub click: Option<f64>,
    pub ts: i64,
}

/// Per-field token-to-index maps with a reserved `<UNK>` index 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub threshold: u32,
    pub fields: Vec<FieldVocab>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldVocab {
    pub name: String,
    /// token -> index, indices from 1; 0 is `<UNK>`.
    pub map: std::collections::BTreeMap<String, u32>,
}

pub const UNK_INDEX: u32 = 0;

impl Vocabulary {
    /// Build from visible data only. Tokens with frequency below the
    /// threshold map to `<UNK>`. Index assignment is deterministic:
    /// descending frequency, ties broken by token order.
    pub fn build(raws: &[RawSample], cat_names: &[String], threshold: u32) -> Result<Self> {
        let n_cat = cat_names.len();
        if raws.iter().any(|r| r.cat.len() != n_cat) {
            return Err(Error::Schema("raw sample categorical arity mismatch".into()));
        }
        let mut fields = Vec::with_capacity(n_cat);
        for (col, name) in cat_names.iter().enumerate() {
            let mut counts: HashMap<&str, u32> = HashMap::new();
            for r in raws {
                *counts.entry(r.cat[col].as_str()).or_insert(0) += 1;
            }
            let mut kept: Vec<(&str, u32)> =
                counts.into_iter().filter(|&(_, c)| c >= threshold).collect();
            kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let map = kept
                .into_iter()
                .enumerate()
                .map(|(i, (tok, _))| (tok.to_string(), i as u32 + 1))
                .collect();
            fields.push(FieldVocab { name: name.clone(), map });
        }
        Ok(Vocabulary { threshold, fields })
    }

    pub fn encode_token(&self, field: usize, token: &str) -> u32 {
        self.fields[field].map.get(token).copied().unwrap_or(UNK_INDEX)
    }

    /// Vocabulary size of a field including the `<UNK>` slot.
    pub fn vocab_size(&self, field: usize) -> usize {
        self.fields[field].map.len() + 1
    }

    /// Field schema over this vocabulary plus the given numerical fields.
    pub fn field_schema(&self, num_names: &[String]) -> Result<FieldSchema> {
        let mut decls: Vec<FieldDecl> = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| FieldDecl::Categorical { name: f.name.clone(), vocab_size: self.vocab_size(i) })
            .collect();
        decls.extend(num_names.iter().map(|n| FieldDecl::Numerical { name: n.clone() }));
        FieldSchema::new(&decls)
    }
}

/// Appendix-style numeric transform: `x -> log2(x)` only when `x > 2`.
pub fn transform_numeric(x: f64) -> f64 {
    if x > 2.0 {
        x.log2()
    } else {
        x
    }
}

/// Encode raw samples against a fixed vocabulary, applying the numeric
/// transform. Tokens unseen by the vocabulary builder map to `<UNK>`.
pub fn encode(raws: &[RawSample], vocab: &Vocabulary) -> Vec<Sample> {
    raws.iter()
        .map(|r| Sample {
            cat: r
                .cat
                .iter()
                .enumerate()
                .map(|(f, tok)| vocab.encode_token(f, tok))
                .collect(),
            num: r.num.iter().map(|&x| transform_numeric(x)).collect(),
            label: r.label,
            soft: None,
            click: r.click,
            ts: r.ts,
        })
        .collect()
}

/// Build a vocabulary from the raws and encode them with it.
pub fn preprocess(
    raws: &[RawSample],
    cat_names: &[String],
    threshold: u32,
) -> Result<(Vec<Sample>, Vocabulary)> {
    let vocab = Vocabulary::build(raws, cat_names, threshold)?;
    let samples = encode(raws, &vocab);
    Ok((samples, vocab))
}

/// Temporally ordered hist/train/online/test partitions. The hist split is
/// withheld from student-facing code paths; only teacher training and the
/// full-retrain baseline may read it.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    hist: Vec<Sample>,
    pub train: Vec<Sample>,
    pub online: Vec<Sample>,
    pub test: Vec<Sample>,
    pub ratio: [usize; 4],
}

impl DatasetSplits {
    pub fn hist_len(&self) -> usize {
        self.hist.len()
    }

    /// Teacher-side corpus: hist followed by train.
    pub fn teacher_corpus(&self) -> Vec<Sample> {
        let mut out = self.hist.clone();
        out.extend(self.train.iter().cloned());
        out
    }

    /// Capability-guarded access to the hist split. Student modes cannot
    /// read it; only the full-retrain upper bound may.
    pub fn hist_split(&self, mode: TrainerMode) -> Result<&[Sample]> {
        match mode {
            TrainerMode::FullRetrain => {
                if self.hist.is_empty() {
                    return Err(Error::Data(
                        "full retrain requires a non-empty hist split".into(),
                    ));
                }
                Ok(&self.hist)
            }
            other => Err(Error::Contract(format!(
                "mode {other:?} may not read the hist split"
            ))),
        }
    }

    pub fn boundaries(&self) -> [usize; 4] {
        [self.hist.len(), self.train.len(), self.online.len(), self.test.len()]
    }
}

/// Proportional boundary indices for a 4-way ratio over `n` samples.
pub fn split_indices(n: usize, ratio: [usize; 4]) -> Result<[std::ops::Range<usize>; 4]> {
    let total: usize = ratio.iter().sum();
    if total == 0 {
        return Err(Error::Parameter("split ratio must have a positive total".into()));
    }
    if ratio[2] == 0 || ratio[3] == 0 {
        return Err(Error::Parameter("online and test ratio parts must be >= 1".into()));
    }
    if n < total {
        return Err(Error::Data(format!(
            "{n} samples cannot be split with ratio parts summing to {total}"
        )));
    }
    let b1 = n * ratio[0] / total;
    let b2 = n * (ratio[0] + ratio[1]) / total;
    let b3 = n * (ratio[0] + ratio[1] + ratio[2]) / total;
    Ok([0..b1, b1..b2, b2..b3, b3..n])
}

/// Split timestamp-sorted samples into contiguous proportional parts.
pub fn split_temporal(samples: &[Sample], ratio: [usize; 4]) -> Result<DatasetSplits> {
    let mut sorted: Vec<Sample> = samples.to_vec();
    sorted.sort_by_key(|s| s.ts);
    let ranges = split_indices(sorted.len(), ratio)?;
    let take = |r: &std::ops::Range<usize>| sorted[r.clone()].to_vec();
    let splits = DatasetSplits {
        hist: take(&ranges[0]),
        train: take(&ranges[1]),
        online: take(&ranges[2]),
        test: take(&ranges[3]),
        ratio,
    };
    if splits.online.is_empty() || splits.test.is_empty() {
        return Err(Error::Data("online/test splits came out empty".into()));
    }
    log::info!(
        "temporal split {:?}: hist {} / train {} / online {} / test {}",
        ratio,
        splits.hist.len(),
        splits.train.len(),
        splits.online.len(),
        splits.test.len()
    );
    Ok(splits)
}

/// Full raw-to-splits pipeline. The vocabulary is built from hist + train
/// only (the data the teacher-side party can see); every split is encoded
/// with that shared vocabulary so embedding rows stay index-aligned between
/// teacher and student.
pub fn prepare_splits(
    raws: &[RawSample],
    cat_names: &[String],
    num_names: &[String],
    threshold: u32,
    ratio: [usize; 4],
) -> Result<(DatasetSplits, Vocabulary, FieldSchema)> {
    let mut sorted: Vec<RawSample> = raws.to_vec();
    sorted.sort_by_key(|s| s.ts);
    let ranges = split_indices(sorted.len(), ratio)?;
    let visible = &sorted[ranges[0].start..ranges[1].end];
    let vocab = Vocabulary::build(visible, cat_names, threshold)?;
    let schema = vocab.field_schema(num_names)?;
    let enc = |r: &std::ops::Range<usize>| encode(&sorted[r.clone()], &vocab);
    let splits = DatasetSplits {
        hist: enc(&ranges[0]),
        train: enc(&ranges[1]),
        online: enc(&ranges[2]),
        test: enc(&ranges[3]),
        ratio,
    };
    if splits.online.is_empty() || splits.test.is_empty() {
        return Err(Error::Data("online/test splits came out empty".into()));
    }
    Ok((splits, vocab, schema))
}

/// Rows with a positive click indicator (pCVR training pool).
pub fn clicked(rows: &[Sample]) -> Vec<Sample> {
    rows.iter().filter(|s| s.click.unwrap_or(1.0) > 0.5).cloned().collect()
}

/// Rows without a click (their conversion label is unobserved).
pub fn unclicked(rows: &[Sample]) -> Vec<Sample> {
    rows.iter().filter(|s| s.click.unwrap_or(1.0) <= 0.5).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(cat: &[&str], num: &[f64], y: f64, ts: i64) -> RawSample {
        RawSample {
            cat: cat.iter().map(|s| s.to_string()).collect(),
            num: num.to_vec(),
            label: y,
            click: None,
            ts,
        }
    }

    #[test]
    fn numeric_transform_rule() {
        assert_eq!(transform_numeric(8.0), 3.0);
        assert_eq!(transform_numeric(1024.0), 10.0);
        assert_eq!(transform_numeric(2.0), 2.0);
        assert_eq!(transform_numeric(-5.0), -5.0);
        assert_eq!(transform_numeric(0.5), 0.5);
    }

    #[test]
    fn vocabulary_threshold_and_unk() {
        let mut raws = Vec::new();
        for i in 0..20 {
            raws.push(raw(&["frequent"], &[], 0.0, i));
        }
        for i in 0..9 {
            raws.push(raw(&["rare"], &[], 0.0, 20 + i));
        }
        let names = vec!["f".to_string()];
        let vocab = Vocabulary::build(&raws, &names, 10).unwrap();
        assert_eq!(vocab.vocab_size(0), 2); // <UNK> + "frequent"
        assert_eq!(vocab.encode_token(0, "frequent"), 1);
        assert_eq!(vocab.encode_token(0, "rare"), UNK_INDEX);
        assert_eq!(vocab.encode_token(0, "never-seen"), UNK_INDEX);
    }

    #[test]
    fn vocabulary_ordering_is_deterministic() {
        let raws = vec![
            raw(&["b"], &[], 0.0, 0),
            raw(&["b"], &[], 0.0, 1),
            raw(&["a"], &[], 0.0, 2),
            raw(&["a"], &[], 0.0, 3),
            raw(&["c"], &[], 0.0, 4),
        ];
        let names = vec!["f".to_string()];
        let vocab = Vocabulary::build(&raws, &names, 1).unwrap();
        // Counts: a=2, b=2, c=1. Ties by token order: a before b.
        assert_eq!(vocab.encode_token(0, "a"), 1);
        assert_eq!(vocab.encode_token(0, "b"), 2);
        assert_eq!(vocab.encode_token(0, "c"), 3);
    }

    #[test]
    fn preprocess_encodes_and_transforms() {
        let raws = vec![raw(&["x"], &[8.0], 1.0, 0), raw(&["x"], &[1.5], 0.0, 1)];
        let names = vec!["f".to_string()];
        let (samples, vocab) = preprocess(&raws, &names, 1).unwrap();
        assert_eq!(vocab.vocab_size(0), 2);
        assert_eq!(samples[0].num[0], 3.0);
        assert_eq!(samples[1].num[0], 1.5);
        assert_eq!(samples[0].cat[0], 1);
    }

    fn numbered(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                cat: vec![],
                num: vec![i as f64],
                label: 0.0,
                soft: None,
                click: None,
                ts: i as i64,
            })
            .collect()
    }

    #[test]
    fn split_ratio_arithmetic() {
        let s = split_temporal(&numbered(100_000), [4, 4, 1, 1]).unwrap();
        assert_eq!(s.boundaries(), [40_000, 40_000, 10_000, 10_000]);

        let s = split_temporal(&numbered(200_000), [10, 8, 1, 1]).unwrap();
        assert_eq!(s.boundaries(), [100_000, 80_000, 10_000, 10_000]);
    }

    #[test]
    fn split_monotonicity() {
        let s = split_temporal(&numbered(1000), [4, 4, 1, 1]).unwrap();
        let max_hist = s.teacher_corpus()[..s.hist_len()].iter().map(|x| x.ts).max().unwrap();
        assert!(max_hist < s.train[0].ts);
        assert!(s.train.last().unwrap().ts < s.online[0].ts);
        assert!(s.online.last().unwrap().ts < s.test[0].ts);
    }

    #[test]
    fn empty_hist_split_blocks_full_retrain() {
        let s = split_temporal(&numbered(100), [0, 1, 1, 1]).unwrap();
        assert_eq!(s.hist_len(), 0);
        assert!(matches!(
            s.hist_split(TrainerMode::FullRetrain),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn hist_capability_withheld_from_student_modes() {
        let s = split_temporal(&numbered(100), [4, 4, 1, 1]).unwrap();
        for mode in [
            TrainerMode::Scratch,
            TrainerMode::ScratchOnline,
            TrainerMode::VanillaKd,
            TrainerMode::CrossAdaptFull,
            TrainerMode::CrossAdaptSample,
        ] {
            assert!(matches!(s.hist_split(mode), Err(Error::Contract(_))));
        }
        assert!(s.hist_split(TrainerMode::FullRetrain).is_ok());
    }

    #[test]
    fn too_few_samples_is_data_error() {
        assert!(matches!(
            split_temporal(&numbered(5), [4, 4, 1, 1]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn prepare_splits_shares_one_vocabulary() {
        // A token that only appears in the online segment must encode to UNK.
        let mut raws = Vec::new();
        for i in 0..80 {
            raws.push(raw(&["seen"], &[1.0], 0.0, i));
        }
        for i in 80..100 {
            raws.push(raw(&["late"], &[1.0], 0.0, i));
        }
        let (splits, vocab, schema) = prepare_splits(
            &raws,
            &["f".to_string()],
            &["x".to_string()],
            1,
            [4, 4, 1, 1],
        )
        .unwrap();
        assert_eq!(vocab.encode_token(0, "late"), UNK_INDEX);
        assert!(splits.online.iter().all(|s| s.cat[0] == UNK_INDEX));
        assert_eq!(schema.n_cat, 1);
        assert_eq!(schema.n_num, 1);
    }
}
