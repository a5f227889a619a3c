use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fees::{compute_fee, distribute_fee, mul_div_half_up};
use super::rules::{Beneficiary, ContractRuleSet};
use super::state::LedgerState;
use crate::ledger::{ComplianceVerdict, OperatorId, RejectReason, TransactionRecord, TxStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("sender balance does not cover amount plus charges")]
    InsufficientBalance,
    #[error("amount outside authorized bounds")]
    AmountOutOfBounds,
    #[error("currency not allowed")]
    CurrencyNotAllowed,
    #[error("transaction is in status {0:?}, expected {1:?}")]
    WrongStatus(TxStatus, TxStatus),
    #[error("compliance verdict is not Passed")]
    NotCleared,
}

impl Violation {
    pub fn reject_reason(self) -> Option<RejectReason> {
        match self {
            Violation::InsufficientBalance => Some(RejectReason::InsufficientBalance),
            Violation::AmountOutOfBounds => Some(RejectReason::AmountOutOfBounds),
            Violation::CurrencyNotAllowed => Some(RejectReason::CurrencyNotAllowed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeBreakdown {
    pub total_fee: u64,
    pub allocations: Vec<(Beneficiary, u64)>,
    pub withholding: u64,
}

pub fn compute_withholding(
    amount: u64,
    sender: &OperatorId,
    receiver: &OperatorId,
    rules: &ContractRuleSet,
) -> u64 {
    mul_div_half_up(amount, rules.withholding_bp(sender, receiver) as u64, 10_000)
}

pub fn fee_breakdown(tx: &TransactionRecord, settled_amount: u64, rules: &ContractRuleSet) -> FeeBreakdown {
    let total_fee = compute_fee(settled_amount, rules.fee_rate_bp);
    let shares = distribute_fee(total_fee, &rules.fee_splits);
    FeeBreakdown {
        total_fee,
        allocations: rules
            .fee_splits
            .iter()
            .map(|s| s.beneficiary.clone())
            .zip(shares)
            .collect(),
        withholding: compute_withholding(settled_amount, &tx.sender, &tx.receiver, rules),
    }
}

fn sender_debit(settled_amount: u64, b: &FeeBreakdown) -> i128 {
    settled_amount as i128 + b.total_fee as i128 + b.withholding as i128
}

/// Business-rule validation. `settled_amount` is the transaction value in
/// the settlement currency (equal to `tx.amount` when no conversion
/// applies). Checks run in order: bounds, currency, balance.
pub fn validate_instruction(
    tx: &mut TransactionRecord,
    settled_amount: u64,
    state: &LedgerState,
    rules: &ContractRuleSet,
) -> Result<(), Violation> {
    if tx.status != TxStatus::Initiated {
        return Err(Violation::WrongStatus(tx.status, TxStatus::Initiated));
    }
    if settled_amount < rules.min_amount || settled_amount > rules.max_amount {
        return Err(Violation::AmountOutOfBounds);
    }
    if !rules.currencies.contains(&tx.currency) {
        return Err(Violation::CurrencyNotAllowed);
    }
    let b = fee_breakdown(tx, settled_amount, rules);
    if state.balance(&tx.sender) < sender_debit(settled_amount, &b) {
        return Err(Violation::InsufficientBalance);
    }
    tx.status = TxStatus::Validated;
    Ok(())
}

/// Moves value for a validated, compliance-cleared transaction. Either
/// every balance changes or none does. On insufficient balance the record
/// is marked rejected and the state is left untouched.
pub fn apply_settlement(
    state: &mut LedgerState,
    tx: &mut TransactionRecord,
    settled_amount: u64,
    rules: &ContractRuleSet,
) -> Result<FeeBreakdown, Violation> {
    if tx.status != TxStatus::Validated {
        return Err(Violation::WrongStatus(tx.status, TxStatus::Validated));
    }
    if tx.compliance_verdict != ComplianceVerdict::Passed {
        return Err(Violation::NotCleared);
    }
    let b = fee_breakdown(tx, settled_amount, rules);
    let debit = sender_debit(settled_amount, &b);
    if state.balance(&tx.sender) < debit {
        tx.compliance_verdict = ComplianceVerdict::Rejected(RejectReason::InsufficientBalance);
        return Err(Violation::InsufficientBalance);
    }
    state.credit(&tx.sender, -debit);
    state.credit(&tx.receiver, settled_amount as i128);
    for (who, amt) in &b.allocations {
        match who {
            Beneficiary::Pool => state.fee_pool += *amt as i128,
            Beneficiary::Operator(op) => state.credit(op, *amt as i128),
        }
    }
    state.withholding_pool += b.withholding as i128;
    tx.fee = b.total_fee;
    tx.withholding = b.withholding;
    tx.status = TxStatus::Executed;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{state_digest, Currency, TxId};
    use crate::settlement::rules::{FeeSplit, WithholdingRule};

    fn op(s: &str) -> OperatorId {
        OperatorId::new(s).unwrap()
    }

    fn tx(from: &str, to: &str, amount: u64) -> TransactionRecord {
        TransactionRecord::initiate(
            TxId([1; 16]),
            0,
            op(from),
            op(to),
            amount,
            Currency::new("USD").unwrap(),
        )
        .unwrap()
    }

    fn rules(bp: u32) -> ContractRuleSet {
        ContractRuleSet {
            fee_rate_bp: bp,
            ..Default::default()
        }
    }

    #[test]
    fn validate_with_fee_headroom() {
        let state = LedgerState::with_balances([(op("A"), 1_000_000)]);
        let mut t = tx("A", "B", 500_000);
        validate_instruction(&mut t, 500_000, &state, &rules(65)).unwrap();
        assert_eq!(t.status, TxStatus::Validated);
        // 500,000 + 3,250 = 503,250 is the exact debit bound
        let tight = LedgerState::with_balances([(op("A"), 503_250)]);
        let mut t = tx("A", "B", 500_000);
        assert!(validate_instruction(&mut t, 500_000, &tight, &rules(65)).is_ok());
        let short = LedgerState::with_balances([(op("A"), 503_249)]);
        let mut t = tx("A", "B", 500_000);
        assert_eq!(
            validate_instruction(&mut t, 500_000, &short, &rules(65)),
            Err(Violation::InsufficientBalance)
        );
        assert_eq!(t.status, TxStatus::Initiated);
    }

    #[test]
    fn validate_bounds_and_currency() {
        let state = LedgerState::with_balances([(op("A"), 100)]);
        let mut t = tx("A", "B", 0);
        assert_eq!(
            validate_instruction(&mut t, 0, &state, &rules(0)),
            Err(Violation::AmountOutOfBounds)
        );
        let mut t = tx("A", "B", 10);
        t.currency = Currency::new("EUR").unwrap();
        assert_eq!(
            validate_instruction(&mut t, 10, &state, &rules(0)),
            Err(Violation::CurrencyNotAllowed)
        );
        let mut t = tx("A", "B", 1_000);
        let before = state.clone();
        assert_eq!(
            validate_instruction(&mut t, 1_000, &state, &rules(0)),
            Err(Violation::InsufficientBalance)
        );
        assert_eq!(state, before);
    }

    #[test]
    fn withholding_half_up() {
        let mut r = ContractRuleSet::default();
        r.jurisdictions.insert(op("A"), "US".into());
        r.jurisdictions.insert(op("B"), "EU".into());
        r.withholding.push(WithholdingRule {
            from: "US".into(),
            to: "EU".into(),
            bp: 1_000,
        });
        assert_eq!(compute_withholding(10_000, &op("A"), &op("B"), &r), 1_000);
        assert_eq!(compute_withholding(10_000, &op("B"), &op("A"), &r), 0);
        assert_eq!(compute_withholding(10_000, &op("A"), &op("C"), &r), 0);
        r.withholding[0].bp = 150;
        assert_eq!(compute_withholding(333, &op("A"), &op("B"), &r), 5);
    }

    fn validated(from: &str, to: &str, amount: u64) -> TransactionRecord {
        let mut t = tx(from, to, amount);
        t.status = TxStatus::Validated;
        t.compliance_verdict = ComplianceVerdict::Passed;
        t
    }

    #[test]
    fn plain_transfer() {
        let mut s = LedgerState::with_balances([(op("A"), 100), (op("B"), 0)]);
        let mut t = validated("A", "B", 50);
        apply_settlement(&mut s, &mut t, 50, &rules(0)).unwrap();
        assert_eq!(s.balance(&op("A")), 50);
        assert_eq!(s.balance(&op("B")), 50);
        assert_eq!(t.status, TxStatus::Executed);
    }

    #[test]
    fn fee_to_pool_conserves_total() {
        let mut s = LedgerState::with_balances([(op("A"), 100), (op("B"), 0)]);
        let before = s.total();
        let mut t = validated("A", "B", 50);
        // 10% fee on 50 = 5
        let b = apply_settlement(&mut s, &mut t, 50, &rules(1_000)).unwrap();
        assert_eq!(b.total_fee, 5);
        assert_eq!(s.balance(&op("A")), 45);
        assert_eq!(s.balance(&op("B")), 50);
        assert_eq!(s.fee_pool, 5);
        assert_eq!(s.total(), before);
        assert_eq!(before, 100);
    }

    #[test]
    fn fee_split_to_operators() {
        let mut r = rules(100);
        r.fee_splits = vec![
            FeeSplit {
                beneficiary: Beneficiary::Operator(op("V")),
                weight: 3_333,
            },
            FeeSplit {
                beneficiary: Beneficiary::Pool,
                weight: 6_667,
            },
        ];
        let mut s = LedgerState::with_balances([(op("A"), 1_000_000)]);
        let mut t = validated("A", "B", 10_100);
        apply_settlement(&mut s, &mut t, 10_100, &r).unwrap();
        assert_eq!(t.fee, 101);
        assert_eq!(s.balance(&op("V")) + s.fee_pool, 101);
        assert_eq!(s.total(), 1_000_000);
    }

    #[test]
    fn drained_sender_is_rejected_atomically() {
        // two instructions validated against the same opening balance;
        // the first drains the sender
        let state0 = LedgerState::with_balances([(op("A"), 100)]);
        let r = rules(0);
        let mut t1 = tx("A", "B", 80);
        let mut t2 = tx("A", "C", 80);
        t2.tx_id = TxId([2; 16]);
        validate_instruction(&mut t1, 80, &state0, &r).unwrap();
        validate_instruction(&mut t2, 80, &state0, &r).unwrap();
        t1.compliance_verdict = ComplianceVerdict::Passed;
        t2.compliance_verdict = ComplianceVerdict::Passed;
        let mut s = state0.clone();
        apply_settlement(&mut s, &mut t1, 80, &r).unwrap();
        let snapshot = s.clone();
        let digest = state_digest(&s);
        assert_eq!(
            apply_settlement(&mut s, &mut t2, 80, &r),
            Err(Violation::InsufficientBalance)
        );
        assert_eq!(s, snapshot);
        assert_eq!(state_digest(&s), digest);
        assert_eq!(
            t2.compliance_verdict,
            ComplianceVerdict::Rejected(RejectReason::InsufficientBalance)
        );
        assert_eq!(t2.status, TxStatus::Validated);
    }

    #[test]
    fn apply_requires_clearance() {
        let mut s = LedgerState::with_balances([(op("A"), 100)]);
        let mut t = tx("A", "B", 1);
        assert!(matches!(
            apply_settlement(&mut s, &mut t, 1, &rules(0)),
            Err(Violation::WrongStatus(..))
        ));
        t.status = TxStatus::Validated;
        assert_eq!(
            apply_settlement(&mut s, &mut t, 1, &rules(0)),
            Err(Violation::NotCleared)
        );
    }
}
