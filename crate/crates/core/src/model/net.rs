//! Interaction networks: a plain MLP and an MLP with a second-order
//! factorization-machine term over the field embedding vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Mlp,
    FmMlp,
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchKind::Mlp => write!(f, "mlp"),
            ArchKind::FmMlp => write!(f, "fm_mlp"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in` weights.
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Dense stack mapping the concatenated field embeddings to a scalar logit.
/// Hidden layers use ReLU; the output layer is linear. The FM variant adds a
/// second-order pairwise-interaction term over the field vectors, scaled by
/// the learnable `fm_weight` (zero-initialized so transferred embeddings of
/// any magnitude start with a calibrated logit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionNet {
    pub arch: ArchKind,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    #[serde(default)]
    pub fm_weight: f64,
}

impl InteractionNet {
    pub fn init(arch: ArchKind, input_dim: usize, hidden: &[usize], rng: &mut Rng64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Dimension("interaction net input dim must be positive".into()));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::Dimension("hidden layer sizes must be positive".into()));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in)?;
            for x in w.data_mut() {
                *x = (rng.next_f64() * 2.0 - 1.0) * bound;
            }
            layers.push(DenseLayer { w, b: vec![0.0; fan_out] });
        }
        Ok(InteractionNet { arch, input_dim, hidden: hidden.to_vec(), layers, fm_weight: 0.0 })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        let dense: usize = self.layers.iter().map(|l| l.w.data().len() + l.b.len()).sum();
        dense + 1 // fm_weight (inert for the plain MLP)
    }

    pub fn is_finite(&self) -> bool {
        self.fm_weight.is_finite()
            && self.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|x| x.is_finite()))
    }
}
