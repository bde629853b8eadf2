//! Stage 2: asymmetric teacher-student co-evolution over a sequential
//! stream with shift-gated historical batch augmentation.
//!
//! Every step the student takes an Adam update on task + distillation loss;
//! the teacher accumulates its task-only gradient and applies one Adam step
//! every `tau` steps, then resets the accumulator. Teacher predictions for
//! the student's distillation term always come from the teacher as it stood
//! at the start of the step. Batches are augmented with
//! `floor(r_enh * |B|)` historical rows drawn uniformly from the training
//! pool; streaming rows precede historical rows and both feed the student
//! loss and the teacher accumulation.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, RunReport};
use crate::model::{
    batch_loss, AdamState, GradientSet, LossSpec, PredictionModel, Sample, SampleBatch,
};
use crate::rng::Rng64;
use crate::shift::ShiftReport;

const STREAM_AUGMENT: u64 = 0x30;

/// Per-block learning rates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrPair {
    pub embedding: f64,
    pub net: f64,
}

impl Default for LrPair {
    fn default() -> Self {
        LrPair { embedding: 0.1, net: 0.001 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Student learning rates (applied every step).
    #[serde(default)]
    pub eta_s: LrPair,
    /// Teacher learning rates (applied at each tick on the accumulated
    /// gradient).
    #[serde(default)]
    pub eta_t: LrPair,
    /// Teacher update interval in steps.
    pub tau: u64,
    pub lambda: f64,
    pub temperature: f64,
    /// Historical-augmentation ratio; `None` takes it from the shift report.
    #[serde(default)]
    pub r_enh: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    /// Divide the accumulated teacher gradient by tau before the tick
    /// (off by default: the accumulated sum acts as a large-batch gradient).
    #[serde(default)]
    pub averaged_teacher_grad: bool,
    /// Freeze the teacher entirely (ablation: no co-evolution).
    #[serde(default)]
    pub teacher_frozen: bool,
    /// Rolling-metric window over streaming rows.
    #[serde(default = "default_window")]
    pub rolling_window: usize,
}

fn default_window() -> usize {
    2000
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            eta_s: LrPair::default(),
            eta_t: LrPair::default(),
            tau: 10,
            lambda: 0.7,
            temperature: 4.0,
            r_enh: None,
            batch_size: 256,
            seed: 0,
            averaged_teacher_grad: false,
            teacher_frozen: false,
            rolling_window: 2000,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Parameter("tau must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Parameter("lambda must be >= 0".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Parameter("temperature must be > 0".into()));
        }
        if let Some(r) = self.r_enh {
            if r < 0.0 {
                return Err(Error::Parameter("r_enh must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Mutable co-evolution state across steps.
pub struct CoEvolutionState {
    pub step: u64,
    pub teacher_updates: u64,
    pub student_adam: AdamState,
    pub teacher_adam: AdamState,
    g_t: GradientSet,
}

impl CoEvolutionState {
    pub fn new(teacher: &PredictionModel, student: &PredictionModel, cfg: &OnlineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CoEvolutionState {
            step: 0,
            teacher_updates: 0,
            student_adam: AdamState::new(student, cfg.eta_s.embedding, cfg.eta_s.net)?,
            teacher_adam: AdamState::new(teacher, cfg.eta_t.embedding, cfg.eta_t.net)?,
            g_t: GradientSet::zeros_like(teacher)?,
        })
    }

    /// Accumulated teacher gradient (testing hook).
    pub fn accumulated_gradient(&self) -> &GradientSet {
        &self.g_t
    }
}

/// What one co-evolution step reports back.
#[derive(Debug, Clone)]
pub struct CoStepOutcome {
    pub bce_s: f64,
    pub kd: f64,
    pub bce_t: f64,
    pub teacher_ticked: bool,
    /// Student probabilities before this step's update, full batch order.
    pub student_probs: Vec<f64>,
}

/// Append `floor(r_enh * |batch|)` historical rows after the streaming rows.
pub fn augment_batch(
    batch: &[Sample],
    history_pool: &[Sample],
    r_enh: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = Rng64::seeded(seed, STREAM_AUGMENT);
    augment_batch_with_rng(batch, history_pool, r_enh, &mut rng)
}

fn augment_batch_with_rng(
    batch: &[Sample],
    history_pool: &[Sample],
    r_enh: f64,
    rng: &mut Rng64,
) -> Result<Vec<Sample>> {
    if r_enh < 0.0 {
        return Err(Error::Parameter("r_enh must be >= 0".into()));
    }
    let n_aug = (r_enh * batch.len() as f64).floor() as usize;
    let mut out = batch.to_vec();
    if n_aug == 0 {
        return Ok(out);
    }
    if history_pool.is_empty() {
        return Err(Error::Data(
            "historical augmentation requested but the training pool is empty".into(),
        ));
    }
    for _ in 0..n_aug {
        out.push(history_pool[rng.gen_below(history_pool.len() as u64) as usize].clone());
    }
    Ok(out)
}

/// One asymmetric co-evolution step over an (already augmented) batch.
pub fn co_step(
    teacher: &mut PredictionModel,
    student: &mut PredictionModel,
    rows: &[Sample],
    cfg: &OnlineConfig,
    state: &mut CoEvolutionState,
) -> Result<CoStepOutcome> {
    if teacher.schema != student.schema {
        return Err(Error::Schema("teacher and student schemas differ".into()));
    }
    let batch = SampleBatch::from_samples(&student.schema, rows)?;

    // Teacher predictions from before any update this step.
    let fwd_t = teacher.forward(&batch)?;

    // Student: task + distillation, Adam every step.
    let spec = LossSpec {
        lambda: cfg.lambda,
        temperature: cfg.temperature,
        teacher_logits: Some(&fwd_t.logits),
    };
    let fwd_s = student.forward(&batch)?;
    let loss_s = batch_loss(&batch, &fwd_s.logits, &spec)?;
    let grads_s = student.backward(&fwd_s.cache, &batch, &spec)?;
    let student_probs = fwd_s.probs;
    state.student_adam.apply(student, &grads_s)?;

    // Teacher: task-only gradient, accumulated; pseudo-labeled rows are
    // excluded from the teacher's BCE.
    let task = LossSpec::task_only();
    let has_pseudo = batch.soft.iter().any(Option::is_some);
    let bce_t = if !has_pseudo {
        let loss_t = batch_loss(&batch, &fwd_t.logits, &task)?;
        if !cfg.teacher_frozen {
            let g = teacher.backward(&fwd_t.cache, &batch, &task)?;
            state.g_t.add_scaled(&g, 1.0)?;
        }
        loss_t.bce
    } else {
        let hard: Vec<Sample> = rows.iter().filter(|s| !s.is_pseudo()).cloned().collect();
        if hard.is_empty() {
            0.0
        } else {
            let hb = SampleBatch::from_samples(&teacher.schema, &hard)?;
            let fwd_h = teacher.forward(&hb)?;
            let loss_t = batch_loss(&hb, &fwd_h.logits, &task)?;
            if !cfg.teacher_frozen {
                let g = teacher.backward(&fwd_h.cache, &hb, &task)?;
                state.g_t.add_scaled(&g, 1.0)?;
            }
            loss_t.bce
        }
    };

    state.step += 1;
    let mut ticked = false;
    if !cfg.teacher_frozen && state.step % cfg.tau == 0 {
        let mut g = std::mem::replace(&mut state.g_t, GradientSet::zeros_like(teacher)?);
        if cfg.averaged_teacher_grad {
            g.scale_in_place(1.0 / cfg.tau as f64);
        }
        state.teacher_adam.apply(teacher, &g)?;
        state.teacher_updates += 1;
        ticked = true;
    }

    Ok(CoStepOutcome { bce_s: loss_s.bce, kd: loss_s.kd, bce_t, teacher_ticked: ticked, student_probs })
}

/// One step in the online log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineLogRow {
    pub t: u64,
    pub bce_s: f64,
    pub kd: f64,
    pub bce_t: f64,
    pub rolling_auc: Option<f64>,
    pub rolling_logloss: Option<f64>,
    pub teacher_tick: bool,
    pub n_hist_rows: usize,
    /// Timestamp extent of the streaming rows this step consumed (order
    /// tracing; not part of the CSV).
    #[serde(skip)]
    pub batch_ts_first: i64,
    #[serde(skip)]
    pub batch_ts_last: i64,
}

pub fn write_online_log(path: &Path, rows: &[OnlineLogRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t,bce_s,kd,bce_t,rolling_auc,rolling_logloss,teacher_tick,n_hist_rows")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.bce_s,
            r.kd,
            r.bce_t,
            r.rolling_auc.map(|v| v.to_string()).unwrap_or_default(),
            r.rolling_logloss.map(|v| v.to_string()).unwrap_or_default(),
            u8::from(r.teacher_tick),
            r.n_hist_rows
        )?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct OnlineOutcome {
    pub log: Vec<OnlineLogRow>,
    pub steps: u64,
    pub elapsed_ms: u64,
    /// Progressive metrics over the whole stream (predictions taken before
    /// each update).
    pub stream_report: RunReport,
    pub r_enh: f64,
}

/// Run stage 2 over a timestamp-sorted stream, one pass, in order.
pub fn run_online(
    teacher: &mut PredictionModel,
    student: &mut PredictionModel,
    d_online: &[Sample],
    history_pool: &[Sample],
    shift_report: Option<&ShiftReport>,
    cfg: &OnlineConfig,
) -> Result<OnlineOutcome> {
    cfg.validate()?;
    if d_online.is_empty() {
        return Err(Error::Data("online stream is empty".into()));
    }
    if d_online.windows(2).any(|w| w[0].ts > w[1].ts) {
        return Err(Error::Protocol(
            "online stream must be timestamp-sorted; sequential temporal order is part of the \
             training contract"
                .into(),
        ));
    }
    let r_enh = match (cfg.r_enh, shift_report) {
        (Some(r), _) => r,
        (None, Some(rep)) => rep.r_enh,
        (None, None) => {
            return Err(Error::Parameter(
                "r_enh must come from a shift report or an explicit override".into(),
            ))
        }
    };

    let started = Instant::now();
    let mut state = CoEvolutionState::new(teacher, student, cfg)?;
    let mut rng = Rng64::seeded(cfg.seed, STREAM_AUGMENT);
    let mut log = Vec::with_capacity(d_online.len() / cfg.batch_size + 1);
    let mut window: VecDeque<(f64, f64)> = VecDeque::with_capacity(cfg.rolling_window);
    let mut all_preds = Vec::with_capacity(d_online.len());

    for chunk in d_online.chunks(cfg.batch_size) {
        let rows = augment_batch_with_rng(chunk, history_pool, r_enh, &mut rng)?;
        let n_hist = rows.len() - chunk.len();
        let out = co_step(teacher, student, &rows, cfg, &mut state)?;

        for (i, s) in chunk.iter().enumerate() {
            let p = out.student_probs[i];
            if window.len() == cfg.rolling_window {
                window.pop_front();
            }
            window.push_back((p, s.label));
            all_preds.push(p);
        }
        let (wp, wl): (Vec<f64>, Vec<f64>) = window.iter().copied().unzip();
        log.push(OnlineLogRow {
            t: state.step,
            bce_s: out.bce_s,
            kd: out.kd,
            bce_t: out.bce_t,
            rolling_auc: metrics::auc(&wp, &wl).ok(),
            rolling_logloss: metrics::logloss(&wp, &wl).ok(),
            teacher_tick: out.teacher_ticked,
            n_hist_rows: n_hist,
            batch_ts_first: chunk.first().map(|s| s.ts).unwrap_or_default(),
            batch_ts_last: chunk.last().map(|s| s.ts).unwrap_or_default(),
        });
    }

    let labels: Vec<f64> = d_online.iter().map(|s| s.label).collect();
    let mut stream_report = RunReport::empty();
    stream_report.auc = metrics::auc(&all_preds, &labels).ok();
    stream_report.logloss = metrics::logloss(&all_preds, &labels).ok();
    stream_report.steps = state.step;
    stream_report.elapsed_ms = started.elapsed().as_millis() as u64;
    stream_report.eval_fingerprint = metrics::split_fingerprint(d_online);
    stream_report.n_eval = d_online.len();

    Ok(OnlineOutcome {
        log,
        steps: state.step,
        elapsed_ms: started.elapsed().as_millis() as u64,
        stream_report,
        r_enh,
    })
}
