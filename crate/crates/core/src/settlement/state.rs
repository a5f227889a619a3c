use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::OperatorId;

/// Balances of every operator plus the two protocol pools, all in minor
/// units of the settlement currency.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub balances: BTreeMap<OperatorId, i128>,
    pub fee_pool: i128,
    pub withholding_pool: i128,
}

impl LedgerState {
    pub fn with_balances<I: IntoIterator<Item = (OperatorId, i128)>>(it: I) -> Self {
        LedgerState {
            balances: it.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn balance(&self, op: &OperatorId) -> i128 {
        self.balances.get(op).copied().unwrap_or(0)
    }

    pub fn credit(&mut self, op: &OperatorId, amount: i128) {
        *self.balances.entry(op.clone()).or_insert(0) += amount;
    }

    /// Sum of balances and pools. Constant under settlement.
    pub fn total(&self) -> i128 {
        self.balances.values().sum::<i128>() + self.fee_pool + self.withholding_pool
    }
}
