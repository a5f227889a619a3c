//! Fee computation, business-rule validation, balance updates, transaction
//! lifecycle and disputes.

mod dispute;
mod engine;
mod fees;
mod lifecycle;
mod rules;
mod state;

pub use dispute::{Dispute, DisputeError, DisputeLog, DisputeLogEntry, DisputeReason, Resolution};
pub use engine::{
    apply_settlement, compute_withholding, fee_breakdown, validate_instruction, FeeBreakdown,
    Violation,
};
pub use fees::{compute_fee, distribute_fee, mul_div_half_up, BP_DENOM};
pub use lifecycle::{advance_status, LifecycleError, LifecycleEvent, TxLifecycle};
pub use rules::{Beneficiary, ContractRuleSet, FeeSplit, RuleError, WithholdingRule};
pub use state::LedgerState;
