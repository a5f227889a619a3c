use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Currency, OperatorId};
use crate::settlement::mul_div_half_up;

/// Rates are fixed-point with six decimals.
pub const RATE_ONE: u64 = 1_000_000;
pub const DEFAULT_MAX_AGE_MS: u64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KycStatus {
    Verified,
    Expired,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KycRecord {
    pub operator: OperatorId,
    pub status: KycStatus,
    pub expiry_ms: u64,
}

impl KycRecord {
    /// Status at `now`. Expiry is strict: a record is still valid at
    /// `now == expiry_ms`.
    pub fn status_at(&self, now: u64) -> KycStatus {
        match self.status {
            KycStatus::Revoked => KycStatus::Revoked,
            _ if now > self.expiry_ms => KycStatus::Expired,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanctionsList {
    pub version: u64,
    pub as_of_ms: u64,
    pub operators: BTreeSet<OperatorId>,
}

impl SanctionsList {
    pub fn contains(&self, op: &OperatorId) -> bool {
        self.operators.contains(op)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FxQuote {
    pub from: Currency,
    pub to: Currency,
    pub rate: u64,
}

/// One timestamped rate table as published by the FX feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FxTable {
    pub at_ms: u64,
    pub rates: Vec<FxQuote>,
}

/// Everything the oracle has been fed so far.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleFeeds {
    pub fx: Vec<FxTable>,
    pub sanctions: Vec<SanctionsList>,
    pub kyc: Vec<KycRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("no feed data published at or before the requested time")]
    NoFeedData,
    #[error("no rate for {0}->{1}")]
    UnknownCurrencyPair(Currency, Currency),
}

/// Immutable snapshot handed to screening and conversion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleView {
    pub fx_rates: BTreeMap<(Currency, Currency), u64>,
    pub kyc: BTreeMap<OperatorId, KycRecord>,
    pub sanctions: SanctionsList,
    pub as_of_ms: u64,
    pub max_age_ms: u64,
    /// Staleness at the time the snapshot was taken.
    pub stale: bool,
}

impl OracleView {
    pub fn rate(&self, from: Currency, to: Currency) -> Option<u64> {
        if from == to {
            return Some(RATE_ONE);
        }
        self.fx_rates.get(&(from, to)).copied()
    }

    pub fn is_stale_at(&self, now: u64) -> bool {
        now.saturating_sub(self.as_of_ms) > self.max_age_ms
    }
}

/// Latest published data with timestamp at or before `now`. The view's
/// `as_of_ms` is the newest timestamp among the selected FX table and
/// sanctions list.
pub fn oracle_snapshot(
    feeds: &OracleFeeds,
    now: u64,
    max_age_ms: u64,
) -> Result<OracleView, OracleError> {
    let fx = feeds
        .fx
        .iter()
        .filter(|t| t.at_ms <= now)
        .max_by_key(|t| t.at_ms);
    let sanctions = feeds
        .sanctions
        .iter()
        .filter(|s| s.as_of_ms <= now)
        .max_by_key(|s| (s.as_of_ms, s.version));
    let as_of_ms = match (fx, sanctions) {
        (None, None) => return Err(OracleError::NoFeedData),
        (a, b) => a.map_or(0, |t| t.at_ms).max(b.map_or(0, |s| s.as_of_ms)),
    };
    let fx_rates = fx
        .map(|t| t.rates.iter().map(|q| ((q.from, q.to), q.rate)).collect())
        .unwrap_or_default();
    let view = OracleView {
        fx_rates,
        kyc: feeds
            .kyc
            .iter()
            .map(|k| (k.operator.clone(), k.clone()))
            .collect(),
        sanctions: sanctions.cloned().unwrap_or_default(),
        as_of_ms,
        max_age_ms,
        stale: false,
    };
    Ok(OracleView {
        stale: view.is_stale_at(now),
        ..view
    })
}

/// `amount * rate / 10^6`, rounded half up.
pub fn fx_convert(
    amount: u64,
    from: Currency,
    to: Currency,
    view: &OracleView,
) -> Result<u64, OracleError> {
    let rate = view
        .rate(from, to)
        .ok_or(OracleError::UnknownCurrencyPair(from, to))?;
    Ok(mul_div_half_up(amount, rate, RATE_ONE))
}
