//! Mode orchestration: teacher training, the baseline matrix, the two-stage
//! pipeline, and the comparison-table emitter.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{clicked, unclicked, DatasetSplits};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, RunReport};
use crate::model::{FieldSchema, PredictionModel};
use crate::offline::{
    run_baseline, run_offline_transfer, train_supervised, ArchSpec, DistillConfig, OfflineOutcome,
    StageLogRow, TrainerMode,
};
use crate::online::{run_online, OnlineConfig, OnlineLogRow};
use crate::projection::ProjectionPlan;
use crate::sampler::{temporal_diversity_sample, unclicked_augment, SampledDataset, SamplingConfig};
use crate::shift::{compute_shift, ShiftConfig, ShiftReport};

/// Everything a mode run needs besides the data splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub teacher_arch: ArchSpec,
    pub student_arch: ArchSpec,
    pub distill: DistillConfig,
    pub online: OnlineConfig,
    pub sampling: SamplingConfig,
    pub shift: ShiftConfig,
    /// pCVR mode: train on clicked rows, augment from unclicked ones.
    #[serde(default)]
    pub pcvr: bool,
}

impl PipelineConfig {
    /// Re-seed every stochastic component for one experiment cell.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.distill.seed = seed;
        c.online.seed = seed;
        c.sampling.seed = seed;
        c
    }

    /// Laptop-speed defaults: reference hyperparameters with batch size 256.
    pub fn desk_default() -> Self {
        PipelineConfig {
            teacher_arch: ArchSpec {
                arch: crate::model::ArchKind::Mlp,
                dim: 8,
                hidden: vec![64, 32, 4],
            },
            student_arch: ArchSpec {
                arch: crate::model::ArchKind::FmMlp,
                dim: 16,
                hidden: vec![64, 32, 4],
            },
            distill: DistillConfig::default(),
            online: OnlineConfig::default(),
            sampling: SamplingConfig::default(),
            shift: ShiftConfig::default(),
            pcvr: false,
        }
    }

    /// Reference-scale profile: identical except batch size 4096.
    pub fn paper_default() -> Self {
        let mut c = Self::desk_default();
        c.distill.batch_size = 4096;
        c.online.batch_size = 4096;
        c
    }
}

/// One (mode, seed) experiment cell.
#[derive(Debug)]
pub struct CellResult {
    pub mode: TrainerMode,
    pub seed: u64,
    pub student: PredictionModel,
    /// Final teacher (evolved for crossadapt modes, the input elsewhere).
    pub teacher: Option<PredictionModel>,
    pub report: RunReport,
    pub train_steps: u64,
    pub train_elapsed_ms: u64,
    pub stage_log: Vec<StageLogRow>,
    pub online_log: Vec<OnlineLogRow>,
    pub plan: Option<ProjectionPlan>,
    pub shift_report: Option<ShiftReport>,
}

/// Train the teacher on hist + train (clicked rows only in pCVR mode).
pub fn train_teacher(
    schema: &FieldSchema,
    splits: &DatasetSplits,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(PredictionModel, u64, u64)> {
    let corpus = if cfg.pcvr { clicked(&splits.teacher_corpus()) } else { splits.teacher_corpus() };
    if corpus.is_empty() {
        return Err(Error::Data("teacher corpus is empty".into()));
    }
    let mut dcfg = cfg.distill.clone();
    dcfg.seed = seed;
    let out = train_supervised(schema, &cfg.teacher_arch, &corpus, &dcfg)?;
    Ok((out.model, out.steps, out.elapsed_ms))
}

/// Stage-1 data for a crossadapt mode: the full train pool or the
/// strategically sampled subset, plus pCVR pseudo-label augmentation.
fn stage1_data(
    mode: TrainerMode,
    splits: &DatasetSplits,
    teacher: &PredictionModel,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<SampledDataset> {
    let pool = if cfg.pcvr { clicked(&splits.train) } else { splits.train.clone() };
    if pool.is_empty() {
        return Err(Error::Data("train pool is empty".into()));
    }
    let mut scfg = cfg.sampling.clone();
    scfg.seed = seed;
    let sampled = match mode {
        TrainerMode::CrossAdaptSample => temporal_diversity_sample(&pool, &scfg)?,
        _ => SampledDataset::single_block(pool),
    };
    if cfg.pcvr && scfg.r_unclick > 0.0 {
        let unclick_pool = unclicked(&splits.train);
        return unclicked_augment(sampled, &unclick_pool, teacher, &scfg);
    }
    Ok(sampled)
}

/// Run one mode end to end and evaluate on the test split.
pub fn run_mode(
    mode: TrainerMode,
    splits: &DatasetSplits,
    teacher: &PredictionModel,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<CellResult> {
    let cfg = cfg.with_seed(seed);
    let started = Instant::now();
    let eval_opts = EvalOptions {
        item_key_field: if cfg.pcvr { Some(0) } else { None },
        batch_size: 4096,
    };
    let test_pool = if cfg.pcvr { clicked(&splits.test) } else { splits.test.clone() };

    match mode {
        TrainerMode::Scratch
        | TrainerMode::ScratchOnline
        | TrainerMode::FullRetrain
        | TrainerMode::VanillaKd => {
            let out = run_baseline(mode, splits, Some(teacher), &cfg.student_arch, &cfg.distill)?;
            let report = evaluate(&out.model, &test_pool, &eval_opts)?;
            Ok(CellResult {
                mode,
                seed,
                student: out.model,
                teacher: None,
                report,
                train_steps: out.steps,
                train_elapsed_ms: started.elapsed().as_millis() as u64,
                stage_log: out.log,
                online_log: Vec::new(),
                plan: None,
                shift_report: None,
            })
        }
        TrainerMode::CrossAdaptFull | TrainerMode::CrossAdaptSample => {
            let data = stage1_data(mode, splits, teacher, &cfg, seed)?;
            let OfflineOutcome { model: student, plan, log: stage_log, steps: s1_steps, .. } =
                run_offline_transfer(teacher, &cfg.student_arch, &data, &cfg.distill)?;

            // Shift is computed once from the train pool before the stream.
            let shift_report = compute_shift(&splits.train, &teacher.schema, &cfg.shift)?;

            let mut online_teacher = teacher.clone_frozen();
            let mut student = student;
            let history_pool =
                if cfg.pcvr { clicked(&splits.train) } else { splits.train.clone() };
            let stream =
                if cfg.pcvr { clicked(&splits.online) } else { splits.online.clone() };
            let out = run_online(
                &mut online_teacher,
                &mut student,
                &stream,
                &history_pool,
                Some(&shift_report),
                &cfg.online,
            )?;
            let report = evaluate(&student, &test_pool, &eval_opts)?;
            Ok(CellResult {
                mode,
                seed,
                student,
                teacher: Some(online_teacher),
                report,
                train_steps: s1_steps + out.steps,
                train_elapsed_ms: started.elapsed().as_millis() as u64,
                stage_log,
                online_log: out.log,
                plan,
                shift_report: Some(shift_report),
            })
        }
    }
}

/// Aggregated row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub method: String,
    pub n_runs: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub logloss_mean: f64,
    pub logloss_std: f64,
    pub time_s_mean: f64,
    pub time_s_std: f64,
    pub steps_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group cells by mode and compute mean and standard deviation per metric.
pub fn summarize(cells: &[CellResult]) -> Vec<TableRow> {
    let mut modes: Vec<TrainerMode> = Vec::new();
    for c in cells {
        if !modes.contains(&c.mode) {
            modes.push(c.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.mode == mode).collect();
            let aucs: Vec<f64> = group.iter().filter_map(|c| c.report.auc).collect();
            let lls: Vec<f64> = group.iter().filter_map(|c| c.report.logloss).collect();
            let times: Vec<f64> =
                group.iter().map(|c| c.train_elapsed_ms as f64 / 1000.0).collect();
            let steps: Vec<f64> = group.iter().map(|c| c.train_steps as f64).collect();
            let (auc_mean, auc_std) = if aucs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&aucs) };
            let (ll_mean, ll_std) = if lls.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&lls) };
            let (t_mean, t_std) = mean_std(&times);
            let (s_mean, _) = mean_std(&steps);
            TableRow {
                method: mode.to_string(),
                n_runs: group.len(),
                auc_mean,
                auc_std,
                logloss_mean: ll_mean,
                logloss_std: ll_std,
                time_s_mean: t_mean,
                time_s_std: t_std,
                steps_mean: s_mean,
            }
        })
        .collect()
}

/// Comparison table CSV: method, AUC, LogLoss, time.
pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "method,n_runs,auc_mean,auc_std,logloss_mean,logloss_std,time_s_mean,time_s_std,steps_mean"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3},{:.1}",
            r.method,
            r.n_runs,
            r.auc_mean,
            r.auc_std,
            r.logloss_mean,
            r.logloss_std,
            r.time_s_mean,
            r.time_s_std,
            r.steps_mean
        )?;
    }
    Ok(())
}
