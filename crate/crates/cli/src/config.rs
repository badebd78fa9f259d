//! Experiment configuration files.

use std::path::{Path, PathBuf};

use chainsim_core::analytic::QuadratureConfig;
use chainsim_core::dist::DistributionSpec;
use chainsim_core::econ::CostModel;
use chainsim_core::mc::DEFAULT_CYCLE_CAP;
use chainsim_core::model::{nodes_to_threshold, AttackKind, AttackModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed used when neither the config, `--seed` nor `CHAIN_SEED` provide one.
pub const DEFAULT_SEED: u64 = 20_240_101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostModel>,
    /// Left out of output headers so reruns to different paths stay identical.
    #[serde(default, skip_serializing)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default = "destructive")]
    pub kind: AttackKind,
    pub hack_time: DistributionSpec,
    pub detect_time: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_override: Option<u32>,
    /// Inclusive [first, last] thresholds for sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_range: Option<[u32; 2]>,
}

fn destructive() -> AttackKind {
    AttackKind::Destructive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Analytic,
    Mc,
    #[default]
    Both,
}

impl EngineChoice {
    pub fn analytic(self) -> bool {
        matches!(self, EngineChoice::Analytic | EngineChoice::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, EngineChoice::Mc | EngineChoice::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    /// Replications for mean-time and per-cycle estimates.
    pub time_reps: u64,
    /// Replications for P_m(t) estimates.
    pub prob_reps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Never written to output headers: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub cycle_cap: u64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self { time_reps: 50_000, prob_reps: 50_000, seed: None, workers: 1, cycle_cap: DEFAULT_CYCLE_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if let Some(n) = m.n {
            nodes_to_threshold(n, m.kind)?;
        }
        if m.n.is_none() && m.m_override.is_none() && m.m_range.is_none() {
            return Err(CliError::Config("model needs one of \"n\", \"m_override\" or \"m_range\"".into()));
        }
        if m.m_override == Some(0) {
            return Err(CliError::Config("m_override must be at least 1".into()));
        }
        if let Some([a, b]) = m.m_range {
            check_range(a, b)?;
        }
        if self.plan.time_reps < 2 || self.plan.prob_reps < 2 {
            return Err(CliError::Config("replication counts must be at least 2".into()));
        }
        if self.plan.workers == 0 || self.plan.cycle_cap == 0 {
            return Err(CliError::Config("workers and cycle_cap must be at least 1".into()));
        }
        self.quadrature.validate()?;
        if let Some(ts) = &self.t_grid {
            check_times(ts)?;
        }
        if let Some(c) = &self.cost {
            c.validate()?;
        }
        Ok(())
    }

    /// Threshold for single-point commands: m_override, else derived from n.
    pub fn default_m(&self) -> Option<u32> {
        let m = &self.model;
        m.m_override.or_else(|| m.n.and_then(|n| nodes_to_threshold(n, m.kind).ok()))
    }

    /// The model at threshold `m`.
    pub fn model_at(&self, m: u32) -> Result<AttackModel, CliError> {
        let s = &self.model;
        Ok(AttackModel::with_threshold(m, s.hack_time.clone(), s.detect_time.clone())?)
    }
}

pub fn check_range(a: u32, b: u32) -> Result<(), CliError> {
    if a == 0 || b < a {
        return Err(CliError::Config(format!("m range must satisfy 1 <= first <= last, got {a}:{b}")));
    }
    Ok(())
}

pub fn check_times(ts: &[f64]) -> Result<(), CliError> {
    if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(CliError::Config("times must be a non-empty list of finite values >= 0".into()));
    }
    Ok(())
}
