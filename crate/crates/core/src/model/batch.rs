//! Sample and batch containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::schema::FieldSchema;

/// One labeled example.
///
/// `soft` is set only on pseudo-labeled rows (teacher-generated targets from
/// unclicked exposures); those rows never contribute a hard-label BCE term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub cat: Vec<u32>,
    pub num: Vec<f64>,
    pub label: f64,
    pub soft: Option<f64>,
    pub click: Option<f64>,
    pub ts: i64,
}

impl Sample {
    pub fn is_pseudo(&self) -> bool {
        self.soft.is_some()
    }
}

/// Columnar batch view ready for a forward pass.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// `[categorical field][row]` token indices, field-local.
    pub categorical: Vec<Vec<u32>>,
    /// `[numerical field][row]` values.
    pub numerical: Vec<Vec<f64>>,
    /// Hard 0/1 labels (ignored for pseudo rows).
    pub label: Vec<f64>,
    /// Per-row soft target; `Some` marks a pseudo-labeled row.
    pub soft: Vec<Option<f64>>,
    pub click: Vec<Option<f64>>,
    pub ts: Vec<i64>,
}

impl SampleBatch {
    pub fn from_samples(schema: &FieldSchema, rows: &[Sample]) -> Result<Self> {
        let b = rows.len();
        let mut categorical = vec![Vec::with_capacity(b); schema.n_cat];
        let mut numerical = vec![Vec::with_capacity(b); schema.n_num];
        let mut label = Vec::with_capacity(b);
        let mut soft = Vec::with_capacity(b);
        let mut click = Vec::with_capacity(b);
        let mut ts = Vec::with_capacity(b);
        for (i, s) in rows.iter().enumerate() {
            if s.cat.len() != schema.n_cat || s.num.len() != schema.n_num {
                return Err(Error::Schema(format!(
                    "row {i}: expected {} categorical / {} numerical fields, got {} / {}",
                    schema.n_cat,
                    schema.n_num,
                    s.cat.len(),
                    s.num.len()
                )));
            }
            if let Some(sl) = s.soft {
                if !(0.0..=1.0).contains(&sl) {
                    return Err(Error::Data(format!("row {i}: soft label {sl} outside [0,1]")));
                }
            }
            for (col, &tok) in s.cat.iter().enumerate() {
                categorical[col].push(tok);
            }
            for (col, &x) in s.num.iter().enumerate() {
                numerical[col].push(x);
            }
            label.push(s.label);
            soft.push(s.soft);
            click.push(s.click);
            ts.push(s.ts);
        }
        Ok(SampleBatch { categorical, numerical, label, soft, click, ts })
    }

    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }

    /// Per-row training target: the soft target for pseudo rows, the hard
    /// label otherwise.
    pub fn target(&self, row: usize) -> f64 {
        self.soft[row].unwrap_or(self.label[row])
    }
}
