use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Currency, OperatorId};

/// Where a fee share is credited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Beneficiary {
    Pool,
    Operator(OperatorId),
}

impl TryFrom<String> for Beneficiary {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        if s == "pool" {
            Ok(Beneficiary::Pool)
        } else {
            OperatorId::new(s)
                .map(Beneficiary::Operator)
                .map_err(|e| e.to_string())
        }
    }
}

impl From<Beneficiary> for String {
    fn from(b: Beneficiary) -> String {
        match b {
            Beneficiary::Pool => "pool".into(),
            Beneficiary::Operator(o) => o.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSplit {
    pub beneficiary: Beneficiary,
    /// Parts per 10,000.
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WithholdingRule {
    pub from: String,
    pub to: String,
    pub bp: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("fee split weights sum to {0}, expected 10000")]
    SplitWeights(u64),
    #[error("fee_splits must not be empty")]
    NoSplits,
    #[error("min_amount {min} exceeds max_amount {max}")]
    Bounds { min: u64, max: u64 },
    #[error("allowed currency set is empty")]
    NoCurrencies,
    #[error("settlement currency {0} is not in the allowed set")]
    SettlementCurrency(Currency),
}

/// The settlement "contract": pricing, fee routing, tax withholding and
/// authorization bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractRuleSet {
    pub fee_rate_bp: u32,
    pub fee_splits: Vec<FeeSplit>,
    pub withholding: Vec<WithholdingRule>,
    /// Operator to jurisdiction code; operators not listed have none.
    pub jurisdictions: BTreeMap<OperatorId, String>,
    pub min_amount: u64,
    pub max_amount: u64,
    pub currencies: BTreeSet<Currency>,
    /// Currency balances are kept in.
    pub settlement_currency: Currency,
}

impl Default for ContractRuleSet {
    fn default() -> Self {
        let usd = Currency::new("USD").expect("valid code");
        ContractRuleSet {
            fee_rate_bp: 65,
            fee_splits: vec![FeeSplit {
                beneficiary: Beneficiary::Pool,
                weight: 10_000,
            }],
            withholding: Vec::new(),
            jurisdictions: BTreeMap::new(),
            min_amount: 1,
            max_amount: u64::MAX / 4,
            currencies: [usd].into_iter().collect(),
            settlement_currency: usd,
        }
    }
}

impl ContractRuleSet {
    pub fn validate(&self) -> Result<(), RuleError> {
        if self.fee_splits.is_empty() {
            return Err(RuleError::NoSplits);
        }
        let sum: u64 = self.fee_splits.iter().map(|s| s.weight as u64).sum();
        if sum != 10_000 {
            return Err(RuleError::SplitWeights(sum));
        }
        if self.min_amount > self.max_amount {
            return Err(RuleError::Bounds {
                min: self.min_amount,
                max: self.max_amount,
            });
        }
        if self.currencies.is_empty() {
            return Err(RuleError::NoCurrencies);
        }
        if !self.currencies.contains(&self.settlement_currency) {
            return Err(RuleError::SettlementCurrency(self.settlement_currency));
        }
        Ok(())
    }

    /// Withholding rate for a sender/receiver pair; 0 when no rule applies.
    pub fn withholding_bp(&self, sender: &OperatorId, receiver: &OperatorId) -> u32 {
        let (Some(from), Some(to)) = (
            self.jurisdictions.get(sender),
            self.jurisdictions.get(receiver),
        ) else {
            return 0;
        };
        self.withholding
            .iter()
            .find(|r| &r.from == from && &r.to == to)
            .map_or(0, |r| r.bp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules_are_valid() {
        ContractRuleSet::default().validate().unwrap();
    }

    #[test]
    fn weights_must_sum_to_10000() {
        let mut r = ContractRuleSet::default();
        r.fee_splits[0].weight = 9_999;
        assert_eq!(r.validate(), Err(RuleError::SplitWeights(9_999)));
    }

    #[test]
    fn beneficiary_json() {
        let s: FeeSplit = serde_json::from_str(r#"{"beneficiary":"OP03","weight":10000}"#).unwrap();
        assert_eq!(
            s.beneficiary,
            Beneficiary::Operator(OperatorId::new("OP03").unwrap())
        );
        let p: FeeSplit = serde_json::from_str(r#"{"beneficiary":"pool","weight":1}"#).unwrap();
        assert_eq!(p.beneficiary, Beneficiary::Pool);
    }

    #[test]
    fn unknown_rule_keys_rejected() {
        let err = serde_json::from_str::<ContractRuleSet>(r#"{"fee_rate":65}"#).unwrap_err();
        assert!(err.to_string().contains("fee_rate"));
    }
}
