//! Minimal deep-learning engine: embedding table plus interaction network,
//! forward/backward with hand-coded gradients, Adam, and checkpointing.
//!
//! The parameter set of a model is exactly `{embedding table, net layers}`;
//! every trainable scalar belongs to one of the two blocks, which is what the
//! per-block learning rates and the freeze contract rely on.

mod adam;
mod batch;
mod checkpoint;
pub mod losses;
mod net;
mod schema;

pub use adam::{adam_step, AdamState};
pub use batch::{Sample, SampleBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CKPT_VERSION};
pub use losses::{batch_loss, bce_loss, kd_loss, BatchLoss, LossSpec};
pub use net::{ArchKind, DenseLayer, InteractionNet};
pub use schema::{Field, FieldDecl, FieldKind, FieldSchema};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng64;
use crate::util::{fingerprint_f64, FNV_OFFSET};

const STREAM_EMBEDDING_INIT: u64 = 0x1;
const STREAM_NET_INIT: u64 = 0x2;

/// Vocabulary-indexed dense vector table; the dominant parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub weights: Matrix,
    /// While set, training steps leave the weights bit-identical.
    pub frozen: bool,
}

impl EmbeddingTable {
    /// Scratch init: uniform in [-1/sqrt(d), 1/sqrt(d)].
    pub fn init_uniform(vocab_size: usize, dim: usize, rng: &mut Rng64) -> Result<Self> {
        let mut weights = Matrix::zeros(vocab_size, dim)?;
        let bound = 1.0 / (dim as f64).sqrt();
        for x in weights.data_mut() {
            *x = (rng.next_f64() * 2.0 - 1.0) * bound;
        }
        Ok(EmbeddingTable { vocab_size, dim, weights, frozen: false })
    }

    pub fn from_matrix(weights: Matrix) -> Self {
        EmbeddingTable {
            vocab_size: weights.rows(),
            dim: weights.cols(),
            weights,
            frozen: false,
        }
    }
}

/// Embedding table + interaction network + field schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub embedding: EmbeddingTable,
    pub net: InteractionNet,
    pub schema: FieldSchema,
}

/// Activation record captured by a forward pass; consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch_len: usize,
    /// Flat `B x input_dim` concatenated field vectors.
    input: Vec<f64>,
    /// Pre-activations per layer, flat `B x out_dim`.
    pre: Vec<Vec<f64>>,
    /// Final logits including the FM term.
    logits: Vec<f64>,
    /// Per-row embedding-dimension sums for the FM term (FmMlp only).
    fm_sums: Vec<f64>,
    /// Unscaled per-row FM values (FmMlp only).
    fm_raw: Vec<f64>,
    model_fp: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

/// Per-layer weight and bias gradients (also reused as moment storage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Gradients for every unfrozen parameter. `embedding` is `None` when the
/// table was frozen during the producing backward pass.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub embedding: Option<Matrix>,
    pub net: Vec<LayerGrad>,
    pub fm_weight: f64,
}

impl GradientSet {
    pub fn zeros_like(model: &PredictionModel) -> Result<Self> {
        let embedding = if model.embedding.frozen {
            None
        } else {
            Some(Matrix::zeros(model.embedding.vocab_size, model.embedding.dim)?)
        };
        let net = model
            .net
            .layers
            .iter()
            .map(|l| {
                Ok(LayerGrad {
                    w: Matrix::zeros(l.w.rows(), l.w.cols())?,
                    b: vec![0.0; l.b.len()],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GradientSet { embedding, net, fm_weight: 0.0 })
    }

    /// `self += f * other`. Layouts must agree.
    pub fn add_scaled(&mut self, other: &GradientSet, f: f64) -> Result<()> {
        match (&mut self.embedding, &other.embedding) {
            (Some(a), Some(b)) => {
                if a.shape() != b.shape() {
                    return Err(Error::Shape("embedding gradient shape mismatch".into()));
                }
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += f * y;
                }
            }
            (None, None) => {}
            (Some(_), None) => {}
            (None, Some(_)) => {
                return Err(Error::Shape(
                    "cannot accumulate embedding gradients into a frozen layout".into(),
                ));
            }
        }
        if self.net.len() != other.net.len() {
            return Err(Error::Shape("layer count mismatch in gradient accumulation".into()));
        }
        for (a, b) in self.net.iter_mut().zip(&other.net) {
            if a.w.shape() != b.w.shape() || a.b.len() != b.b.len() {
                return Err(Error::Shape("layer gradient shape mismatch".into()));
            }
            for (x, y) in a.w.data_mut().iter_mut().zip(b.w.data()) {
                *x += f * y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += f * y;
            }
        }
        self.fm_weight += f * other.fm_weight;
        Ok(())
    }

    pub fn scale_in_place(&mut self, f: f64) {
        if let Some(e) = &mut self.embedding {
            for x in e.data_mut() {
                *x *= f;
            }
        }
        for l in &mut self.net {
            for x in l.w.data_mut() {
                *x *= f;
            }
            for x in &mut l.b {
                *x *= f;
            }
        }
        self.fm_weight *= f;
    }

    /// Flatten in model parameter order; zeros where the embedding block is
    /// absent. Test plumbing for the finite-difference oracle.
    pub fn flat(&self, model: &PredictionModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(model.param_len());
        match &self.embedding {
            Some(e) => out.extend_from_slice(e.data()),
            None => out.extend(std::iter::repeat(0.0).take(
                model.embedding.vocab_size * model.embedding.dim,
            )),
        }
        for l in &self.net {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out.push(self.fm_weight);
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = self.fm_weight.abs();
        if let Some(e) = &self.embedding {
            m = e.data().iter().fold(m, |acc, x| acc.max(x.abs()));
        }
        for l in &self.net {
            m = l.w.data().iter().fold(m, |acc, x| acc.max(x.abs()));
            m = l.b.iter().fold(m, |acc, x| acc.max(x.abs()));
        }
        m
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl PredictionModel {
    /// Fresh model with scratch-initialized embeddings and net.
    pub fn init(
        schema: FieldSchema,
        arch: ArchKind,
        dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("embedding dim must be positive".into()));
        }
        let mut emb_rng = Rng64::seeded(seed, STREAM_EMBEDDING_INIT);
        let embedding = EmbeddingTable::init_uniform(schema.total_vocab, dim, &mut emb_rng)?;
        let mut net_rng = Rng64::seeded(seed, STREAM_NET_INIT);
        let net = InteractionNet::init(arch, schema.input_dim(dim), hidden, &mut net_rng)?;
        Ok(PredictionModel { embedding, net, schema })
    }

    /// Model whose embedding table is supplied (e.g. a projected teacher
    /// table); the net is scratch-initialized from `seed`.
    pub fn with_embedding(
        schema: FieldSchema,
        arch: ArchKind,
        hidden: &[usize],
        embedding: EmbeddingTable,
        seed: u64,
    ) -> Result<Self> {
        if embedding.vocab_size != schema.total_vocab {
            return Err(Error::Schema(format!(
                "embedding rows {} do not match schema vocabulary {}",
                embedding.vocab_size, schema.total_vocab
            )));
        }
        let mut net_rng = Rng64::seeded(seed, STREAM_NET_INIT);
        let net = InteractionNet::init(arch, schema.input_dim(embedding.dim), hidden, &mut net_rng)?;
        Ok(PredictionModel { embedding, net, schema })
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim
    }

    /// Deep copy; source and copy evolve independently afterwards.
    pub fn clone_frozen(&self) -> PredictionModel {
        self.clone()
    }

    pub fn param_len(&self) -> usize {
        self.embedding.weights.data().len() + self.net.param_count()
    }

    pub fn param_get(&self, mut i: usize) -> f64 {
        let e = self.embedding.weights.data();
        if i < e.len() {
            return e[i];
        }
        i -= e.len();
        for l in &self.net.layers {
            if i < l.w.data().len() {
                return l.w.data()[i];
            }
            i -= l.w.data().len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        if i == 0 {
            return self.net.fm_weight;
        }
        panic!("parameter index out of range");
    }

    pub fn param_set(&mut self, mut i: usize, v: f64) {
        let e = self.embedding.weights.data_mut();
        if i < e.len() {
            e[i] = v;
            return;
        }
        i -= e.len();
        for l in &mut self.net.layers {
            if i < l.w.data().len() {
                l.w.data_mut()[i] = v;
                return;
            }
            i -= l.w.data().len();
            if i < l.b.len() {
                l.b[i] = v;
                return;
            }
            i -= l.b.len();
        }
        if i == 0 {
            self.net.fm_weight = v;
            return;
        }
        panic!("parameter index out of range");
    }

    /// Bit-exact fingerprint of all parameters.
    pub fn param_fingerprint(&self) -> u64 {
        let mut h = FNV_OFFSET;
        fingerprint_f64(&mut h, self.embedding.weights.data());
        for l in &self.net.layers {
            fingerprint_f64(&mut h, l.w.data());
            fingerprint_f64(&mut h, &l.b);
        }
        fingerprint_f64(&mut h, &[self.net.fm_weight]);
        h
    }

    pub fn embedding_fingerprint(&self) -> u64 {
        let mut h = FNV_OFFSET;
        fingerprint_f64(&mut h, self.embedding.weights.data());
        h
    }

    /// Forward pass. Returns probabilities, logits, and the activation
    /// record needed by [`PredictionModel::backward`].
    pub fn forward(&self, batch: &SampleBatch) -> Result<ForwardResult> {
        if batch.categorical.len() != self.schema.n_cat || batch.numerical.len() != self.schema.n_num
        {
            return Err(Error::Schema(format!(
                "batch has {} categorical / {} numerical columns, schema expects {} / {}",
                batch.categorical.len(),
                batch.numerical.len(),
                self.schema.n_cat,
                self.schema.n_num
            )));
        }
        let b = batch.len();
        if b == 0 {
            return Err(Error::Data("forward on empty batch".into()));
        }
        let d = self.embedding.dim;
        let nf = self.schema.n_fields();
        let input_dim = nf * d;
        debug_assert_eq!(input_dim, self.net.input_dim);

        let mut input = vec![0.0; b * input_dim];
        for row in 0..b {
            let base = row * input_dim;
            for (fi, field) in self.schema.fields.iter().enumerate() {
                let dst = &mut input[base + fi * d..base + (fi + 1) * d];
                match field.kind {
                    FieldKind::Categorical { vocab_size, offset, col } => {
                        let tok = batch.categorical[col][row] as usize;
                        if tok >= vocab_size {
                            return Err(Error::Input(format!(
                                "row {row}, field '{}': token {tok} >= vocabulary {vocab_size}",
                                field.name
                            )));
                        }
                        dst.copy_from_slice(self.embedding.weights.row(offset + tok));
                    }
                    FieldKind::Numerical { col, emb_row } => {
                        let x = batch.numerical[col][row];
                        for (o, w) in dst.iter_mut().zip(self.embedding.weights.row(emb_row)) {
                            *o = x * w;
                        }
                    }
                }
            }
        }

        // Dense stack.
        let n_layers = self.net.layers.len();
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut act = input.clone();
        for (li, layer) in self.net.layers.iter().enumerate() {
            let in_dim = layer.w.cols();
            let out_dim = layer.w.rows();
            let mut z = vec![0.0; b * out_dim];
            for row in 0..b {
                let a = &act[row * in_dim..(row + 1) * in_dim];
                let zr = &mut z[row * out_dim..(row + 1) * out_dim];
                for (o, zo) in zr.iter_mut().enumerate() {
                    let wrow = layer.w.row(o);
                    let mut acc = layer.b[o];
                    for (wi, ai) in wrow.iter().zip(a) {
                        acc += wi * ai;
                    }
                    *zo = acc;
                }
            }
            if li + 1 < n_layers {
                act = z.iter().map(|&x| relu(x)).collect();
            }
            pre.push(z);
        }

        let mlp_out = pre.last().expect("at least one layer");
        let mut logits: Vec<f64> = (0..b).map(|r| mlp_out[r]).collect();

        // Second-order FM term over field vectors, scaled by fm_weight.
        let mut fm_sums = Vec::new();
        let mut fm_raw = Vec::new();
        if self.net.arch == ArchKind::FmMlp {
            fm_sums = vec![0.0; b * d];
            fm_raw = Vec::with_capacity(b);
            for row in 0..b {
                let base = row * input_dim;
                let mut fm = 0.0;
                for k in 0..d {
                    let mut s = 0.0;
                    let mut sq = 0.0;
                    for f in 0..nf {
                        let v = input[base + f * d + k];
                        s += v;
                        sq += v * v;
                    }
                    fm_sums[row * d + k] = s;
                    fm += s * s - sq;
                }
                let raw = 0.5 * fm;
                fm_raw.push(raw);
                logits[row] += self.net.fm_weight * raw;
            }
        }

        let probs: Vec<f64> = logits.iter().map(|&z| losses::sigmoid(z)).collect();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite prediction".into()));
        }
        let cache = ForwardCache {
            batch_len: b,
            input,
            pre,
            logits: logits.clone(),
            fm_sums,
            fm_raw,
            model_fp: self.param_fingerprint(),
        };
        Ok(ForwardResult { probs, logits, cache })
    }

    /// Backward pass for the loss described by `spec`, differentiated at the
    /// activations recorded in `cache`. Frozen embeddings yield no embedding
    /// gradient block.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        batch: &SampleBatch,
        spec: &LossSpec,
    ) -> Result<GradientSet> {
        if cache.model_fp != self.param_fingerprint() {
            return Err(Error::State(
                "stale forward cache: model parameters changed since the forward pass".into(),
            ));
        }
        if cache.batch_len != batch.len() {
            return Err(Error::State("forward cache does not match this batch".into()));
        }
        let dlogits = losses::loss_dlogits(batch, &cache.logits, spec)?;

        let b = batch.len();
        let d = self.embedding.dim;
        let nf = self.schema.n_fields();
        let input_dim = nf * d;
        let n_layers = self.net.layers.len();

        let mut grads = GradientSet::zeros_like(self)?;

        // Walk the dense stack backwards.
        let mut delta = dlogits.clone(); // B x out_dim of current layer
        for li in (0..n_layers).rev() {
            let layer = &self.net.layers[li];
            let in_dim = layer.w.cols();
            let out_dim = layer.w.rows();
            // Input activations of this layer.
            let prev: Vec<f64> = if li == 0 {
                cache.input.clone()
            } else {
                cache.pre[li - 1].iter().map(|&x| relu(x)).collect()
            };
            let g = &mut grads.net[li];
            let mut dprev = vec![0.0; b * in_dim];
            for row in 0..b {
                let drow = &delta[row * out_dim..(row + 1) * out_dim];
                let arow = &prev[row * in_dim..(row + 1) * in_dim];
                for (o, &dz) in drow.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    g.b[o] += dz;
                    let gw = g.w.row_mut(o);
                    let wrow = layer.w.row(o);
                    let dp = &mut dprev[row * in_dim..(row + 1) * in_dim];
                    for i in 0..in_dim {
                        gw[i] += dz * arow[i];
                        dp[i] += dz * wrow[i];
                    }
                }
            }
            if li > 0 {
                // ReLU mask from the previous layer's pre-activations.
                for (dp, &z) in dprev.iter_mut().zip(cache.pre[li - 1].iter()) {
                    if z <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            delta = dprev;
        }
        let mut dinput = delta; // B x input_dim

        // FM contribution: logit += fm_weight * fm_raw, with
        // d(fm_raw)/d(v_fk) = S_k - v_fk.
        if self.net.arch == ArchKind::FmMlp {
            let w_fm = self.net.fm_weight;
            for row in 0..b {
                let dz = dlogits[row];
                if dz == 0.0 {
                    continue;
                }
                grads.fm_weight += dz * cache.fm_raw[row];
                if w_fm != 0.0 {
                    let base = row * input_dim;
                    for f in 0..nf {
                        for k in 0..d {
                            let v = cache.input[base + f * d + k];
                            dinput[base + f * d + k] +=
                                dz * w_fm * (cache.fm_sums[row * d + k] - v);
                        }
                    }
                }
            }
        }

        // Scatter into the embedding table unless frozen.
        if let Some(ge) = &mut grads.embedding {
            for row in 0..b {
                let base = row * input_dim;
                for (fi, field) in self.schema.fields.iter().enumerate() {
                    let dv = &dinput[base + fi * d..base + (fi + 1) * d];
                    match field.kind {
                        FieldKind::Categorical { offset, col, .. } => {
                            let tok = batch.categorical[col][row] as usize;
                            let grow = ge.row_mut(offset + tok);
                            for (gr, dvk) in grow.iter_mut().zip(dv) {
                                *gr += dvk;
                            }
                        }
                        FieldKind::Numerical { col, emb_row } => {
                            let x = batch.numerical[col][row];
                            let grow = ge.row_mut(emb_row);
                            for (gr, dvk) in grow.iter_mut().zip(dv) {
                                *gr += x * dvk;
                            }
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Forward + loss + backward in one call; the common trainer path.
    pub fn loss_and_grad(
        &self,
        batch: &SampleBatch,
        spec: &LossSpec,
    ) -> Result<(BatchLoss, GradientSet, ForwardResult)> {
        let fwd = self.forward(batch)?;
        let loss = batch_loss(batch, &fwd.logits, spec)?;
        let grads = self.backward(&fwd.cache, batch, spec)?;
        Ok((loss, grads, fwd))
    }

    /// Probabilities over a sample slice, batched internally.
    pub fn predict(&self, rows: &[Sample], batch_size: usize) -> Result<Vec<f64>> {
        let bs = batch_size.max(1);
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(bs) {
            let batch = SampleBatch::from_samples(&self.schema, chunk)?;
            let fwd = self.forward(&batch)?;
            out.extend(fwd.probs);
        }
        Ok(out)
    }
}
