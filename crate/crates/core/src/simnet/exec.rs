use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::config::SimConfig;
use super::workload::Workload;
use crate::compliance::{
    fx_convert, oracle_snapshot, screen, KycRecord, KycStatus, OracleFeeds, OracleView, SanctionsList,
};
use crate::ledger::{
    prepare_for_append, ComplianceVerdict, OperatorId, RejectReason, TransactionRecord, TxId, TxStatus,
};
use crate::settlement::{apply_settlement, validate_instruction, ContractRuleSet, LedgerState};

/// Balance changes made by one block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Deltas {
    pub balances: BTreeMap<OperatorId, i128>,
    pub fee_pool: i128,
    pub withholding_pool: i128,
}

impl Deltas {
    fn between(before: &LedgerState, after: &LedgerState, touched: &[OperatorId]) -> Deltas {
        let mut balances = BTreeMap::new();
        for op in touched {
            let d = after.balance(op) - before.balance(op);
            if d != 0 {
                balances.insert(op.clone(), d);
            }
        }
        Deltas {
            balances,
            fee_pool: after.fee_pool - before.fee_pool,
            withholding_pool: after.withholding_pool - before.withholding_pool,
        }
    }

    pub fn sum(&self) -> i128 {
        self.balances.values().sum::<i128>() + self.fee_pool + self.withholding_pool
    }
}

#[derive(Debug, Clone)]
pub struct Executed {
    pub records: Vec<TransactionRecord>,
    pub state: LedgerState,
    pub deltas: Deltas,
}

/// Immutable inputs shared by every node: rules, oracle feeds and the
/// transaction bodies clients submitted.
#[derive(Debug)]
pub struct ExecCtx {
    pub rules: ContractRuleSet,
    pub workload: Arc<Workload>,
    pub index: HashMap<TxId, u32>,
    feeds: OracleFeeds,
    /// (feed time, snapshot) in ascending time order.
    epochs: Vec<(u64, OracleView)>,
    max_age_ms: u64,
    heartbeat_ms: u64,
}

impl ExecCtx {
    pub fn new(config: &SimConfig, workload: Arc<Workload>) -> ExecCtx {
        let c = &config.compliance;
        let kyc = match &c.kyc {
            Some(list) => list.clone(),
            None => workload
                .operators
                .iter()
                .map(|op| KycRecord {
                    operator: op.clone(),
                    status: KycStatus::Verified,
                    expiry_ms: u64::MAX,
                })
                .collect(),
        };
        let feeds = OracleFeeds {
            fx: c.fx_feeds.clone(),
            sanctions: vec![SanctionsList {
                version: c.sanctions_version,
                as_of_ms: 0,
                operators: c.sanctions.iter().cloned().collect(),
            }],
            kyc,
        };
        let mut times: Vec<u64> = feeds.fx.iter().map(|t| t.at_ms).collect();
        times.push(0);
        times.sort_unstable();
        times.dedup();
        let epochs = times
            .into_iter()
            .map(|t| {
                let mut v = oracle_snapshot(&feeds, t, u64::MAX).expect("sanctions feed at t=0");
                // staleness is judged in `view_at` against the heartbeat
                v.max_age_ms = u64::MAX;
                (t, v)
            })
            .collect();
        let index = workload.txs.iter().map(|t| (t.id, t.idx)).collect();
        ExecCtx {
            rules: config.rules.clone(),
            workload,
            index,
            feeds,
            epochs,
            max_age_ms: c.max_age_ms,
            heartbeat_ms: c.heartbeat_ms.max(1),
        }
    }

    pub fn feeds(&self) -> &OracleFeeds {
        &self.feeds
    }

    /// Oracle snapshot used for a block stamped `ts`, or `None` if the
    /// freshest data (including heartbeat republication) is too old.
    pub fn view_at(&self, ts: u64) -> Option<&OracleView> {
        let i = self.epochs.partition_point(|(t, _)| *t <= ts);
        let (t, view) = &self.epochs[i.checked_sub(1)?];
        let as_of = (*t).max(ts / self.heartbeat_ms * self.heartbeat_ms);
        if ts - as_of > self.max_age_ms {
            return None;
        }
        Some(view)
    }

    pub fn record_for(&self, idx: u32) -> TransactionRecord {
        let w = &self.workload.txs[idx as usize];
        TransactionRecord::initiate(
            w.id,
            w.created_at,
            self.workload.operators[w.sender as usize].clone(),
            self.workload.operators[w.receiver as usize].clone(),
            w.amount,
            w.currency,
        )
        .expect("workload never generates self-transfers")
    }

    /// Runs screening, validation and settlement for each transaction in
    /// order, on top of `parent`. Rejected transactions are kept with their
    /// verdict; executed ones leave marked as appended.
    pub fn execute(&self, parent: &LedgerState, txs: &[u32], ts: u64) -> Option<Executed> {
        let view = self.view_at(ts)?;
        let mut state = parent.clone();
        let mut records = Vec::with_capacity(txs.len());
        let mut touched = Vec::with_capacity(txs.len() * 2 + self.rules.fee_splits.len());
        for &i in txs {
            let mut rec = self.record_for(i);
            match screen(&mut rec, view, ts) {
                Ok(ComplianceVerdict::Passed) => {}
                Ok(_) => {
                    records.push(rec);
                    continue;
                }
                Err(_) => return None,
            }
            let settled = match fx_convert(rec.amount, rec.currency, self.rules.settlement_currency, view) {
                Ok(v) => v,
                Err(_) => {
                    rec.compliance_verdict = ComplianceVerdict::Rejected(RejectReason::UnknownCurrencyPair);
                    records.push(rec);
                    continue;
                }
            };
            if let Err(v) = validate_instruction(&mut rec, settled, &state, &self.rules) {
                let reason = v.reject_reason().expect("fresh record fails only on business rules");
                rec.compliance_verdict = ComplianceVerdict::Rejected(reason);
                records.push(rec);
                continue;
            }
            apply_settlement(&mut state, &mut rec, settled, &self.rules)
                .expect("validated against this exact state");
            touched.push(rec.sender.clone());
            touched.push(rec.receiver.clone());
            rec.status = TxStatus::ConsensusApproved;
            records.push(rec);
        }
        for s in &self.rules.fee_splits {
            if let crate::settlement::Beneficiary::Operator(op) = &s.beneficiary {
                touched.push(op.clone());
            }
        }
        touched.sort();
        touched.dedup();
        prepare_for_append(&mut records).expect("statuses set above");
        let deltas = Deltas::between(parent, &state, &touched);
        Some(Executed {
            records,
            state,
            deltas,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::{FxQuote, FxTable};
    use crate::ledger::Currency;
    use crate::simnet::rng::SimRng;
    use crate::simnet::workload::generate_workload;

    fn ctx(cfg: &SimConfig) -> ExecCtx {
        let wl = generate_workload(&cfg.workload, &cfg.tainted_operators(), &mut SimRng::new(1));
        ExecCtx::new(cfg, Arc::new(wl))
    }

    fn small() -> SimConfig {
        let mut c = SimConfig::default();
        c.workload.duration_ms = 50;
        c
    }

    #[test]
    fn execution_conserves_value() {
        let cfg = small();
        let cx = ctx(&cfg);
        let state = LedgerState::with_balances(cx.workload.operators.iter().map(|o| (o.clone(), 1_000_000_000)));
        let idx: Vec<u32> = (0..cx.workload.txs.len() as u32).collect();
        let out = cx.execute(&state, &idx, 1_000).unwrap();
        assert_eq!(out.state.total(), state.total());
        assert_eq!(out.deltas.sum(), 0);
        assert!(out.records.iter().all(|r| r.status == TxStatus::Appended));
        assert!(out.state.fee_pool > 0);
    }

    #[test]
    fn sanctioned_party_rejected() {
        let mut cfg = small();
        cfg.compliance.sanctions = vec![OperatorId::new("OP01").unwrap()];
        cfg.workload.tainted_share_bp = 5_000;
        let cx = ctx(&cfg);
        let state = LedgerState::with_balances(cx.workload.operators.iter().map(|o| (o.clone(), 1_000_000_000)));
        let idx: Vec<u32> = (0..cx.workload.txs.len() as u32).collect();
        let out = cx.execute(&state, &idx, 1_000).unwrap();
        for (r, w) in out.records.iter().zip(&cx.workload.txs) {
            assert_eq!(w.tainted, r.compliance_verdict.is_rejected());
            if w.tainted {
                assert_eq!(r.compliance_verdict, ComplianceVerdict::Rejected(RejectReason::Sanctioned));
                assert_eq!(r.status, TxStatus::Initiated);
            }
        }
    }

    #[test]
    fn heartbeat_keeps_oracle_fresh() {
        let mut cfg = small();
        cfg.compliance.max_age_ms = 500;
        let cx = ctx(&cfg);
        assert!(cx.view_at(10_000_000).is_some());
        cfg.compliance.heartbeat_ms = 1_000;
        cfg.compliance.max_age_ms = 100;
        let cx = ctx(&cfg);
        assert!(cx.view_at(1_100).is_some());
        assert!(cx.view_at(1_101).is_none());
    }

    #[test]
    fn conversion_uses_latest_feed() {
        let mut cfg = small();
        let eur = Currency::new("EUR").unwrap();
        let usd = Currency::new("USD").unwrap();
        cfg.rules.currencies.insert(eur);
        cfg.rules.fee_rate_bp = 0;
        cfg.compliance.fx_feeds = vec![
            FxTable {
                at_ms: 0,
                rates: vec![FxQuote { from: eur, to: usd, rate: 2_000_000 }],
            },
            FxTable {
                at_ms: 500,
                rates: vec![FxQuote { from: eur, to: usd, rate: 3_000_000 }],
            },
        ];
        cfg.workload.currencies = vec![eur];
        let cx = ctx(&cfg);
        let w = &cx.workload.txs[0];
        let sender = cx.workload.operators[w.sender as usize].clone();
        let state = LedgerState::with_balances([(sender.clone(), 1_000_000_000)]);
        let early = cx.execute(&state, &[0], 100).unwrap();
        let late = cx.execute(&state, &[0], 600).unwrap();
        assert_eq!(early.deltas.balances[&sender], -2 * w.amount as i128);
        assert_eq!(late.deltas.balances[&sender], -3 * w.amount as i128);
    }
}
