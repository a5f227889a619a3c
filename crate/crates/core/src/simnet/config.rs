use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compliance::{FxTable, KycRecord, KycStatus, DEFAULT_MAX_AGE_MS};
use crate::consensus::MAX_VALIDATORS;
use crate::ledger::{Currency, OperatorId};
use crate::settlement::{ContractRuleSet, RuleError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0}: minimum exceeds maximum")]
    BadRange(&'static str),
    #[error("validators must be between 1 and {MAX_VALIDATORS}, got {0}")]
    Validators(u16),
    #[error("fault refers to validator {0}, which does not exist")]
    FaultValidator(u16),
    #[error("no validator is free of faults")]
    NoHonestValidator,
    #[error("rules: {0}")]
    Rules(#[from] RuleError),
    #[error("workload: {0}")]
    Workload(String),
    #[error("max_block_txs must be at least 1")]
    BlockSize,
}

/// Simulated pipeline stages with a sampled duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Validation,
    ConsensusVote,
    Append,
    Confirmation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    pub validation: [u64; 2],
    pub consensus_vote: [u64; 2],
    pub append: [u64; 2],
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            validation: [100, 200],
            consensus_vote: [500, 1_000],
            append: [50, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Stops sending and receiving at `at_ms`, permanently.
    Crash { at_ms: u64 },
    /// Cut off from every peer during `[from_ms, to_ms)`; resyncs on heal.
    Partition { from_ms: u64, to_ms: u64 },
    /// As leader, sends one block to even-indexed peers and a variant to
    /// odd-indexed peers.
    ByzantineEquivocate,
    /// Never sends anything.
    ByzantineSilence,
    /// Signs votes for random digests and never ships block payloads.
    ByzantineGarbage,
    /// Flips one byte of the node's stored chain once the run is over.
    TamperAttempt { height: u64, byte_offset: usize },
}

impl Behavior {
    pub fn is_byzantine(&self) -> bool {
        matches!(
            self,
            Behavior::ByzantineEquivocate | Behavior::ByzantineSilence | Behavior::ByzantineGarbage
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub validator: u16,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadProfile {
    pub tx_per_day: u64,
    /// Ratio of the daily peak rate to the mean rate; at least 1.
    pub peak_multiplier: f64,
    /// Virtual time at which the daily rate peaks.
    pub peak_at_ms: u64,
    pub duration_ms: u64,
    /// Stop generating after this many transactions.
    pub max_txs: Option<u64>,
    pub operators: u16,
    /// Inclusive bounds, minor units.
    pub amount_range: [u64; 2],
    pub currencies: Vec<Currency>,
    /// Opening balance of every operator, minor units.
    pub initial_balance: u64,
    /// Share of transactions (parts per 10,000) that involve a sanctioned
    /// or KYC-expired operator.
    pub tainted_share_bp: u32,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        WorkloadProfile {
            tx_per_day: 500_000_000,
            peak_multiplier: 3.5,
            peak_at_ms: 0,
            duration_ms: 10_000,
            max_txs: None,
            operators: 20,
            amount_range: [100, 1_000_000],
            currencies: vec![Currency::new("USD").expect("valid code")],
            initial_balance: 1_000_000_000_000,
            tainted_share_bp: 0,
        }
    }
}

impl WorkloadProfile {
    pub fn operator_ids(&self) -> Vec<OperatorId> {
        let width = self.operators.to_string().len().max(2);
        (1..=self.operators)
            .map(|i| OperatorId::new(format!("OP{i:0width$}")).expect("short ascii id"))
            .collect()
    }

    /// Mean arrival rate in transactions per second.
    pub fn mean_rate_per_sec(&self) -> f64 {
        self.tx_per_day as f64 / 86_400.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplianceConfig {
    pub sanctions: Vec<OperatorId>,
    pub sanctions_version: u64,
    /// `None` registers every workload operator as verified without expiry.
    pub kyc: Option<Vec<KycRecord>>,
    pub fx_feeds: Vec<FxTable>,
    pub max_age_ms: u64,
    /// The oracle republishes its latest data on this period.
    pub heartbeat_ms: u64,
    /// Chance (parts per 10,000) that a settled transaction draws an
    /// oracle-data dispute.
    pub oracle_dispute_bp: u32,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        ComplianceConfig {
            sanctions: Vec::new(),
            sanctions_version: 1,
            kyc: None,
            fx_feeds: Vec::new(),
            max_age_ms: DEFAULT_MAX_AGE_MS,
            heartbeat_ms: 1_000,
            oracle_dispute_bp: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub validators: u16,
    pub faults: Vec<FaultSpec>,
    pub latency: LatencyConfig,
    pub confirmation_window_ms: [u64; 2],
    pub workload: WorkloadProfile,
    pub rules: ContractRuleSet,
    pub compliance: ComplianceConfig,
    pub max_block_txs: usize,
    /// View-change timeout; defaults to twice the consensus maximum.
    pub timeout_ms: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            validators: 4,
            faults: Vec::new(),
            latency: LatencyConfig::default(),
            confirmation_window_ms: [57_000, 178_700],
            workload: WorkloadProfile::default(),
            rules: ContractRuleSet::default(),
            compliance: ComplianceConfig::default(),
            max_block_txs: 500,
            timeout_ms: None,
        }
    }
}

fn range(name: &'static str, r: [u64; 2]) -> Result<(), ConfigError> {
    if r[0] > r[1] {
        return Err(ConfigError::BadRange(name));
    }
    Ok(())
}

impl SimConfig {
    pub fn stage_range(&self, stage: Stage) -> [u64; 2] {
        match stage {
            Stage::Validation => self.latency.validation,
            Stage::ConsensusVote => self.latency.consensus_vote,
            Stage::Append => self.latency.append,
            Stage::Confirmation => self.confirmation_window_ms,
        }
    }

    pub fn timeout(&self) -> u64 {
        self.timeout_ms
            .unwrap_or(2 * self.latency.consensus_vote[1])
            .max(1)
    }

    pub fn behavior_of(&self, v: u16) -> Vec<&Behavior> {
        self.faults
            .iter()
            .filter(|f| f.validator == v)
            .map(|f| &f.behavior)
            .collect()
    }

    /// Operators a tainted transaction may draw from: sanctioned ones, and
    /// those whose KYC is revoked or lapses before any transaction can
    /// finish validation.
    pub fn tainted_operators(&self) -> Vec<OperatorId> {
        let mut out: Vec<OperatorId> = self.compliance.sanctions.clone();
        if let Some(kyc) = &self.compliance.kyc {
            out.extend(
                kyc.iter()
                    .filter(|k| k.status != KycStatus::Verified || k.expiry_ms < self.latency.validation[0])
                    .map(|k| k.operator.clone()),
            );
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.validators == 0 || self.validators as usize > MAX_VALIDATORS {
            return Err(ConfigError::Validators(self.validators));
        }
        range("latency.validation", self.latency.validation)?;
        range("latency.consensus_vote", self.latency.consensus_vote)?;
        range("latency.append", self.latency.append)?;
        range("confirmation_window_ms", self.confirmation_window_ms)?;
        range("workload.amount_range", self.workload.amount_range)?;
        for f in &self.faults {
            if f.validator >= self.validators {
                return Err(ConfigError::FaultValidator(f.validator));
            }
            if let Behavior::Partition { from_ms, to_ms } = f.behavior {
                range("partition window", [from_ms, to_ms])?;
            }
        }
        if (0..self.validators).all(|v| !self.behavior_of(v).is_empty()) {
            return Err(ConfigError::NoHonestValidator);
        }
        self.rules.validate()?;
        if self.max_block_txs == 0 {
            return Err(ConfigError::BlockSize);
        }
        let w = &self.workload;
        let bad = |m: &str| Err(ConfigError::Workload(m.to_string()));
        if !(w.peak_multiplier >= 1.0 && w.peak_multiplier.is_finite()) {
            return bad("peak_multiplier must be a finite number >= 1");
        }
        if w.operators < 2 {
            return bad("at least two operators are required");
        }
        if w.amount_range[0] == 0 {
            return bad("amount_range must start at 1 or more");
        }
        if w.currencies.is_empty() {
            return bad("currencies must not be empty");
        }
        if w.tainted_share_bp > 10_000 {
            return bad("tainted_share_bp exceeds 10000");
        }
        let ops = w.operator_ids();
        let tainted = self.tainted_operators();
        if w.tainted_share_bp > 0 && tainted.is_empty() {
            return bad("tainted_share_bp > 0 needs a sanctioned or expired operator");
        }
        if ops.iter().filter(|o| !tainted.contains(o)).count() < 2 {
            return bad("fewer than two untainted operators");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_paper_brackets() {
        let c = SimConfig::default();
        assert_eq!(c.latency.validation, [100, 200]);
        assert_eq!(c.latency.consensus_vote, [500, 1_000]);
        assert_eq!(c.latency.append, [50, 100]);
        assert_eq!(c.confirmation_window_ms, [57_000, 178_700]);
        assert_eq!(c.timeout(), 2_000);
        assert_eq!(c.max_block_txs, 500);
        c.validate().unwrap();
    }

    #[test]
    fn fault_json() {
        let f: FaultSpec =
            serde_json::from_str(r#"{"validator":1,"behavior":{"kind":"crash","at_ms":5}}"#).unwrap();
        assert_eq!(f.behavior, Behavior::Crash { at_ms: 5 });
        let e = serde_json::from_str::<FaultSpec>(r#"{"validator":1,"behavior":{"kind":"meteor"}}"#);
        assert!(e.unwrap_err().to_string().contains("meteor"));
        let e = serde_json::from_str::<FaultSpec>(
            r#"{"validator":1,"behavior":{"kind":"crash","at_ms":5,"extra":1}}"#,
        );
        assert!(e.is_err());
    }

    #[test]
    fn inverted_range_rejected() {
        let mut c = SimConfig::default();
        c.latency.append = [100, 50];
        assert_eq!(c.validate(), Err(ConfigError::BadRange("latency.append")));
    }

    #[test]
    fn operator_names() {
        let w = WorkloadProfile {
            operators: 3,
            ..Default::default()
        };
        let ids: Vec<String> = w.operator_ids().into_iter().map(String::from).collect();
        assert_eq!(ids, ["OP01", "OP02", "OP03"]);
    }

    #[test]
    fn all_faulty_rejected() {
        let mut c = SimConfig {
            validators: 1,
            ..Default::default()
        };
        c.faults.push(FaultSpec {
            validator: 0,
            behavior: Behavior::ByzantineSilence,
        });
        assert_eq!(c.validate(), Err(ConfigError::NoHonestValidator));
    }
}
