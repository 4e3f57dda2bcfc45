//! Run configuration: one JSON document describing data, GP, environment,
//! PPO and evaluation protocol. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use frugalsense_core::env::EnvConfig;
use frugalsense_core::gp::{HyperMask, KernelParams};
use frugalsense_core::policies::OracleAllocation;
use frugalsense_core::ppo::PpoConfig;
use frugalsense_core::timeseries::{SyntheticProfile, DAYS_PER_WEEK};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{0}")]
    Io(#[from] crate::io::IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Measurement CSV; when absent the synthetic profile is generated.
    pub measurements: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    /// Length of generated data.
    pub weeks: u32,
    pub profile: SyntheticProfile,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { measurements: None, holidays: None, weeks: 3, profile: SyntheticProfile::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    /// Kernel parameter file; when absent the kernel is fitted.
    pub params: Option<PathBuf>,
    /// Leading weeks of data used as context and for fitting.
    pub train_weeks: u32,
    pub init: KernelParams,
    pub mask: HyperMask,
    /// Likelihood evaluations allowed to the optimizer.
    pub budget: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            params: None,
            train_weeks: 2,
            init: KernelParams::default(),
            mask: HyperMask::fixed_period(),
            budget: 90,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Start days of training episodes.
    pub train_days: Vec<u32>,
    /// Start days scored with greedy actions to pick the best checkpoint.
    pub validation_days: Vec<u32>,
    /// First day of the held-out evaluation period.
    pub eval_start_day: u32,
    pub eval_days: u32,
    /// Budget of the fixed-schedule baselines over the evaluation period.
    pub baseline_budget: usize,
    pub oracle_allocation: OracleAllocation,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let week: Vec<u32> = (DAYS_PER_WEEK..2 * DAYS_PER_WEEK).collect();
        ProtocolConfig {
            train_days: week.clone(),
            validation_days: week,
            eval_start_day: 2 * DAYS_PER_WEEK,
            eval_days: DAYS_PER_WEEK,
            baseline_budget: 100,
            oracle_allocation: OracleAllocation::Daily,
        }
    }
}

/// One agent of a sweep; unset fields keep the base PPO configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_coef: Option<f64>,
}

impl SweepPoint {
    pub fn apply(&self, base: &PpoConfig) -> PpoConfig {
        PpoConfig {
            seed: self.seed.unwrap_or(base.seed),
            gamma: self.gamma.unwrap_or(base.gamma),
            gae_lambda: self.lambda.unwrap_or(base.gae_lambda),
            clip_epsilon: self.clip.unwrap_or(base.clip_epsilon),
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            entropy_coef: self.entropy_coef.unwrap_or(base.entropy_coef),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub agents: Vec<SweepPoint>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let point = |seed, lr, clip| SweepPoint { seed: Some(seed), lr: Some(lr), clip: Some(clip), ..Default::default() };
        SweepGrid {
            agents: vec![point(0, 3e-4, 0.2), point(1, 1e-3, 0.2), point(2, 3e-4, 0.1), point(3, 1e-3, 0.3)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub gp: GpConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub protocol: ProtocolConfig,
    pub sweep: SweepGrid,
}

fn invalid(path: &Path, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { path: path.to_path_buf(), message: message.to_string() }
}

impl RunConfig {
    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory and must exist.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ConfigError::Io(crate::io::IoError::MissingFile(path.to_path_buf()))
            } else {
                invalid(path, e)
            }
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| invalid(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.measurements, &mut cfg.data.holidays, &mut cfg.gp.params].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(invalid(path, format!("referenced file {} does not exist", p.display())));
            }
        }
        cfg.validate().map_err(|m| invalid(path, m))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.env.validate().map_err(|e| e.to_string())?;
        self.ppo.validate().map_err(|e| e.to_string())?;
        if self.gp.train_weeks == 0 {
            return Err("gp.train_weeks must be at least 1".into());
        }
        if self.protocol.train_days.is_empty() || self.protocol.validation_days.is_empty() {
            return Err("protocol.train_days and protocol.validation_days must be non-empty".into());
        }
        if self.protocol.eval_days == 0 {
            return Err("protocol.eval_days must be at least 1".into());
        }
        if self.data.profile.office_db < self.data.profile.base_db || self.data.profile.noise_sd < 0.0 {
            return Err("profile needs office_db >= base_db and noise_sd >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"ppo": {"gamma": 0.9, "gama": 1}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(ConfigError::Invalid { .. })));
        std::fs::write(&p, r#"{"ppo": {"gamma": 0.9}, "env": {"horizon": 12}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.ppo.gamma, 0.9);
        assert_eq!(cfg.env.horizon, 12);
        assert_eq!(cfg.env.budget_per_day, 14);
    }

    #[test]
    fn missing_referenced_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"data": {"measurements": "nope.csv"}}"#).unwrap();
        let err = RunConfig::load(&p).unwrap_err().to_string();
        assert!(err.contains("nope.csv"), "{err}");
    }

    #[test]
    fn out_of_range_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"ppo": {"gamma": 1.5}}"#).unwrap();
        assert!(RunConfig::load(&p).is_err());
    }

    #[test]
    fn default_sweep_has_four_agents() {
        let g = SweepGrid::default();
        assert_eq!(g.agents.len(), 4);
        let cfg = g.agents[1].apply(&PpoConfig::default());
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.seed, 1);
    }
}
