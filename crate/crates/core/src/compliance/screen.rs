use thiserror::Error;

use super::oracle::{KycStatus, OracleView};
use crate::ledger::{ComplianceVerdict, OperatorId, RejectReason, TransactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScreenError {
    #[error("oracle view as of {as_of_ms} is older than {max_age_ms} ms at {now}")]
    StaleOracle { as_of_ms: u64, max_age_ms: u64, now: u64 },
}

fn kyc_reason(view: &OracleView, op: &OperatorId, now: u64) -> Option<RejectReason> {
    match view.kyc.get(op).map(|k| k.status_at(now)) {
        None => Some(RejectReason::KycMissing),
        Some(KycStatus::Verified) => None,
        Some(KycStatus::Expired | KycStatus::Revoked) => Some(RejectReason::KycExpired),
    }
}

/// Compliance verdict for `tx` under `view` at `now`, without touching the
/// record. Sanctions are checked before KYC, sender before receiver.
pub fn evaluate(
    tx: &TransactionRecord,
    view: &OracleView,
    now: u64,
) -> Result<ComplianceVerdict, ScreenError> {
    if view.is_stale_at(now) {
        return Err(ScreenError::StaleOracle {
            as_of_ms: view.as_of_ms,
            max_age_ms: view.max_age_ms,
            now,
        });
    }
    if view.sanctions.contains(&tx.sender) || view.sanctions.contains(&tx.receiver) {
        return Ok(ComplianceVerdict::Rejected(RejectReason::Sanctioned));
    }
    let reason = kyc_reason(view, &tx.sender, now).or_else(|| kyc_reason(view, &tx.receiver, now));
    Ok(reason.map_or(ComplianceVerdict::Passed, ComplianceVerdict::Rejected))
}

/// Screens `tx` and records the verdict on it. A stale view leaves the
/// record unchanged.
pub fn screen(
    tx: &mut TransactionRecord,
    view: &OracleView,
    now: u64,
) -> Result<ComplianceVerdict, ScreenError> {
    let v = evaluate(tx, view, now)?;
    tx.compliance_verdict = v;
    Ok(v)
}
