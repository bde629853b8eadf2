//! Adam with per-block learning rates (embedding table vs interaction net).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{GradientSet, LayerGrad, PredictionModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr_embedding: f64,
    pub lr_net: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m_emb: Matrix,
    v_emb: Matrix,
    m_net: Vec<LayerGrad>,
    v_net: Vec<LayerGrad>,
    #[serde(default)]
    m_fm: f64,
    #[serde(default)]
    v_fm: f64,
}

impl AdamState {
    pub fn new(model: &PredictionModel, lr_embedding: f64, lr_net: f64) -> Result<Self> {
        let zeros_layers = || -> Result<Vec<LayerGrad>> {
            model
                .net
                .layers
                .iter()
                .map(|l| {
                    Ok(LayerGrad {
                        w: Matrix::zeros(l.w.rows(), l.w.cols())?,
                        b: vec![0.0; l.b.len()],
                    })
                })
                .collect()
        };
        Ok(AdamState {
            step: 0,
            lr_embedding,
            lr_net,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m_emb: Matrix::zeros(model.embedding.vocab_size, model.embedding.dim)?,
            v_emb: Matrix::zeros(model.embedding.vocab_size, model.embedding.dim)?,
            m_net: zeros_layers()?,
            v_net: zeros_layers()?,
            m_fm: 0.0,
            v_fm: 0.0,
        })
    }

    fn check_layout(&self, model: &PredictionModel, grads: &GradientSet) -> Result<()> {
        if self.m_emb.shape() != model.embedding.weights.shape() {
            return Err(Error::Shape("optimizer state does not match model embedding".into()));
        }
        if self.m_net.len() != model.net.layers.len() || grads.net.len() != model.net.layers.len() {
            return Err(Error::Shape("optimizer/gradient layer count mismatch".into()));
        }
        for ((m, l), g) in self.m_net.iter().zip(&model.net.layers).zip(&grads.net) {
            if m.w.shape() != l.w.shape() || g.w.shape() != l.w.shape() || g.b.len() != l.b.len() {
                return Err(Error::Shape("optimizer/gradient layer shape mismatch".into()));
            }
        }
        if let Some(ge) = &grads.embedding {
            if ge.shape() != model.embedding.weights.shape() {
                return Err(Error::Shape("embedding gradient shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// One bias-corrected Adam step. The embedding block is untouched when
    /// frozen or when the gradient set carries no embedding block.
    pub fn apply(&mut self, model: &mut PredictionModel, grads: &GradientSet) -> Result<()> {
        self.check_layout(model, grads)?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64,
                      b1: f64, b2: f64, eps: f64| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };

        if !model.embedding.frozen {
            if let Some(ge) = &grads.embedding {
                update(
                    model.embedding.weights.data_mut(),
                    ge.data(),
                    self.m_emb.data_mut(),
                    self.v_emb.data_mut(),
                    self.lr_embedding,
                    self.beta1,
                    self.beta2,
                    self.eps,
                );
            }
        }
        for li in 0..model.net.layers.len() {
            let layer = &mut model.net.layers[li];
            let g = &grads.net[li];
            update(
                layer.w.data_mut(),
                g.w.data(),
                self.m_net[li].w.data_mut(),
                self.v_net[li].w.data_mut(),
                self.lr_net,
                self.beta1,
                self.beta2,
                self.eps,
            );
            update(
                &mut layer.b,
                &g.b,
                &mut self.m_net[li].b,
                &mut self.v_net[li].b,
                self.lr_net,
                self.beta1,
                self.beta2,
                self.eps,
            );
        }
        {
            let mut p = [model.net.fm_weight];
            update(
                &mut p,
                &[grads.fm_weight],
                std::slice::from_mut(&mut self.m_fm),
                std::slice::from_mut(&mut self.v_fm),
                self.lr_net,
                self.beta1,
                self.beta2,
                self.eps,
            );
            model.net.fm_weight = p[0];
        }
        Ok(())
    }
}

/// Standard Adam update with per-block learning rates.
pub fn adam_step(
    model: &mut PredictionModel,
    grads: &GradientSet,
    state: &mut AdamState,
) -> Result<()> {
    state.apply(model, grads)
}
