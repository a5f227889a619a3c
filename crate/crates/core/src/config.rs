//! Top-level run configuration: one JSON document for everything that
//! affects a run's output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::econ::{BaselineStagePlan, CostModel, EconError};
use crate::settlement::ContractRuleSet;
use crate::simnet::{ComplianceConfig, ConfigError, FaultSpec, LatencyConfig, SimConfig, WorkloadProfile};

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Sim(#[from] ConfigError),
    #[error(transparent)]
    Econ(#[from] EconError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub validators: u16,
    pub faults: Vec<FaultSpec>,
    pub latency: LatencyConfig,
    pub confirmation_window_ms: [u64; 2],
    pub workload: WorkloadProfile,
    pub rules: ContractRuleSet,
    pub compliance: ComplianceConfig,
    pub max_block_txs: usize,
    pub timeout_ms: Option<u64>,
    pub cost_model: CostModel,
    pub baseline_plan: BaselineStagePlan,
    /// Overridden by `--out`, and itself overrides `SETTLESIM_OUT`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_sim(SimConfig::default())
    }
}

impl RunConfig {
    pub fn from_sim(s: SimConfig) -> RunConfig {
        RunConfig {
            seed: s.seed,
            validators: s.validators,
            faults: s.faults,
            latency: s.latency,
            confirmation_window_ms: s.confirmation_window_ms,
            workload: s.workload,
            rules: s.rules,
            compliance: s.compliance,
            max_block_txs: s.max_block_txs,
            timeout_ms: s.timeout_ms,
            cost_model: CostModel::default(),
            baseline_plan: BaselineStagePlan::default(),
            output_dir: None,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            validators: self.validators,
            faults: self.faults.clone(),
            latency: self.latency.clone(),
            confirmation_window_ms: self.confirmation_window_ms,
            workload: self.workload.clone(),
            rules: self.rules.clone(),
            compliance: self.compliance.clone(),
            max_block_txs: self.max_block_txs,
            timeout_ms: self.timeout_ms,
        }
    }

    /// Parses and validates. Errors carry the path of the offending key.
    pub fn from_json(text: &str) -> Result<RunConfig, RunConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| RunConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        self.sim().validate()?;
        self.cost_model.validate()?;
        self.baseline_plan.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.seed = 42;
        c.output_dir = Some("out".into());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_json(r#"{"workload": {"tx_per_dya": 5}}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("workload"), "{msg}");
        assert!(msg.contains("tx_per_dya"), "{msg}");
        let e = RunConfig::from_json(r#"{"sed": 1}"#).unwrap_err().to_string();
        assert!(e.contains("sed"), "{e}");
    }

    #[test]
    fn semantic_errors() {
        assert!(matches!(
            RunConfig::from_json(r#"{"validators": 0}"#),
            Err(RunConfigError::Sim(ConfigError::Validators(0)))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"baseline_plan": {"stages": []}}"#),
            Err(RunConfigError::Econ(EconError::BadPlan(_)))
        ));
        assert!(matches!(RunConfig::from_json("{"), Err(RunConfigError::Parse { .. })));
    }
}
