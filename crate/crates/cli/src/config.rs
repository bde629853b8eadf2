//! Run configuration: JSON schema, overrides, and profiles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crossadapt_core::dataio::{SchemaConfig, SyntheticSpec};
use crossadapt_core::error::{Error, Result};
use crossadapt_core::experiment::PipelineConfig;
use crossadapt_core::offline::{ArchSpec, DistillConfig, TrainerMode};
use crossadapt_core::online::OnlineConfig;
use crossadapt_core::sampler::SamplingConfig;
use crossadapt_core::shift::ShiftConfig;

/// Where the samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf, schema: SchemaConfig, ratio: [usize; 4] },
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

/// One experiment configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub teacher: ArchSpec,
    pub student: ArchSpec,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub online: OnlineConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub pcvr: bool,
    /// Mode for single-pipeline commands; list for `experiment`.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub modes: Option<Vec<String>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub fn parse_mode(name: &str) -> Result<TrainerMode> {
    match name {
        "scratch" => Ok(TrainerMode::Scratch),
        "scratch_online" => Ok(TrainerMode::ScratchOnline),
        "full_retrain" => Ok(TrainerMode::FullRetrain),
        "vanilla_kd" => Ok(TrainerMode::VanillaKd),
        "crossadapt_full" => Ok(TrainerMode::CrossAdaptFull),
        "crossadapt" | "crossadapt_sample" => Ok(TrainerMode::CrossAdaptSample),
        other => Err(Error::Parameter(format!(
            "mode: unknown value '{other}' (expected scratch, scratch_online, full_retrain, \
             vanilla_kd, crossadapt_full, or crossadapt_sample)"
        ))),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.distill.validate()?;
        self.online.validate()?;
        self.sampling.validate()?;
        if let DataConfig::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if let DataConfig::Csv { schema, .. } = &self.data {
            schema.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("seeds: at least one seed is required".into()));
        }
        if let Some(m) = &self.mode {
            parse_mode(m)?;
        }
        if let Some(ms) = &self.modes {
            for m in ms {
                parse_mode(m)?;
            }
        }
        if !(self.shift.theta_low > 0.0 && self.shift.theta_low < self.shift.theta_high) {
            return Err(Error::Parameter(
                "shift: thresholds must satisfy 0 < theta_low < theta_high".into(),
            ));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            teacher_arch: self.teacher.clone(),
            student_arch: self.student.clone(),
            distill: self.distill.clone(),
            online: self.online.clone(),
            sampling: self.sampling.clone(),
            shift: self.shift.clone(),
            pcvr: self.pcvr,
        }
    }
}

/// Apply `--override key.path=value` entries onto the raw JSON before typed
/// deserialization. Values parse as JSON when possible, else as strings.
pub fn apply_overrides(raw: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    for entry in overrides {
        let (path, value) = entry.split_once('=').ok_or_else(|| {
            Error::Parameter(format!("override '{entry}' must look like key.path=value"))
        })?;
        let parsed: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let mut node = &mut *raw;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| {
                Error::Parameter(format!("override '{path}': '{part}' is not an object"))
            })?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), parsed.clone());
            } else {
                node = obj.entry(part.to_string()).or_insert_with(|| serde_json::json!({}));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile '{other}' (expected desk or paper)")),
        }
    }
}

/// Load a config file, apply overrides, profile, and CLI-level tweaks.
pub fn load_config(
    path: &Path,
    overrides: &[String],
    profile: Profile,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))?;
    apply_overrides(&mut raw, overrides)?;
    let mut cfg: RunConfig = serde_json::from_value(raw)
        .map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))?;
    match profile {
        Profile::Desk => {}
        Profile::Paper => {
            cfg.distill.batch_size = 4096;
            cfg.online.batch_size = 4096;
        }
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o.to_path_buf());
    }
    cfg.validate()?;
    Ok(cfg)
}
