//! Feature-field schema shared by teacher and student.
//!
//! All categorical fields index into one embedding table through per-field
//! offsets. Numerical fields each own a single reserved row whose vector is
//! scaled by the feature value, so every feature participates in the
//! interaction network through the same `n_fields x dim` input layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    /// Token-indexed field; `offset + token` addresses the embedding row.
    Categorical { vocab_size: usize, offset: usize, col: usize },
    /// Real-valued field; its value scales the vector at `emb_row`.
    Numerical { col: usize, emb_row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub fields: Vec<Field>,
    pub total_vocab: usize,
    pub n_cat: usize,
    pub n_num: usize,
}

/// Field declaration used to build a schema in order.
#[derive(Debug, Clone)]
pub enum FieldDecl {
    Categorical { name: String, vocab_size: usize },
    Numerical { name: String },
}

impl FieldSchema {
    pub fn new(decls: &[FieldDecl]) -> Result<Self> {
        if decls.is_empty() {
            return Err(Error::Schema("schema needs at least one field".into()));
        }
        let mut fields = Vec::with_capacity(decls.len());
        let mut offset = 0usize;
        let mut n_cat = 0usize;
        let mut n_num = 0usize;
        for decl in decls {
            match decl {
                FieldDecl::Categorical { name, vocab_size } => {
                    if *vocab_size == 0 {
                        return Err(Error::Schema(format!(
                            "field '{name}' has empty vocabulary"
                        )));
                    }
                    fields.push(Field {
                        name: name.clone(),
                        kind: FieldKind::Categorical {
                            vocab_size: *vocab_size,
                            offset,
                            col: n_cat,
                        },
                    });
                    offset += vocab_size;
                    n_cat += 1;
                }
                FieldDecl::Numerical { name } => {
                    n_num += 1;
                    fields.push(Field {
                        name: name.clone(),
                        kind: FieldKind::Numerical { col: n_num - 1, emb_row: 0 },
                    });
                }
            }
        }
        // Numerical rows live after all categorical slices.
        let mut num_row = offset;
        for f in &mut fields {
            if let FieldKind::Numerical { emb_row, .. } = &mut f.kind {
                *emb_row = num_row;
                num_row += 1;
            }
        }
        Ok(FieldSchema { fields, total_vocab: num_row, n_cat, n_num })
    }

    /// Convenience constructor: categorical `(name, vocab)` pairs followed by
    /// numerical field names.
    pub fn from_parts(cat: &[(&str, usize)], num: &[&str]) -> Result<Self> {
        let mut decls: Vec<FieldDecl> = cat
            .iter()
            .map(|(n, v)| FieldDecl::Categorical { name: n.to_string(), vocab_size: *v })
            .collect();
        decls.extend(num.iter().map(|n| FieldDecl::Numerical { name: n.to_string() }));
        Self::new(&decls)
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    /// Interaction-network input width for embedding dimension `dim`.
    pub fn input_dim(&self, dim: usize) -> usize {
        self.n_fields() * dim
    }
}
