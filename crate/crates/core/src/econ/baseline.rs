use std::collections::{BTreeMap, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::EconError;
use crate::ledger::{OperatorId, TxId};
use crate::settlement::{mul_div_half_up, DisputeLog, DisputeReason};
use crate::simnet::{SimRng, Workload};

pub const DAY_MS: u64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineStage {
    Initiation,
    BatchTransmission,
    RecipientProcessing,
    Clearinghouse,
    CorrespondentBanking,
    RegulatoryVerification,
    FinalSettlement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRange {
    pub stage: BaselineStage,
    /// End-day range, inclusive.
    pub days: [u32; 2],
}

/// Traditional settlement pipeline, plus the labor-side constants the
/// comparison report quotes (these are not simulated).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineStagePlan {
    pub stages: Vec<StageRange>,
    pub reconciliation_hours: [u32; 2],
    pub blockchain_reconciliation_minutes: u32,
    pub dispute_resolution_days: [u32; 2],
    pub blockchain_dispute_hours: [u32; 2],
    /// Record errors injected into the bilateral books.
    pub injected_errors: u32,
    /// Headline traditional fee charged on each baseline transfer.
    pub fee_bp: u32,
}

impl Default for BaselineStagePlan {
    fn default() -> Self {
        use BaselineStage::*;
        let s = |stage, lo, hi| StageRange { stage, days: [lo, hi] };
        BaselineStagePlan {
            stages: vec![
                s(Initiation, 0, 0),
                s(BatchTransmission, 1, 2),
                s(RecipientProcessing, 2, 3),
                s(Clearinghouse, 3, 5),
                s(CorrespondentBanking, 5, 20),
                s(RegulatoryVerification, 20, 40),
                s(FinalSettlement, 40, 120),
            ],
            reconciliation_hours: [12, 15],
            blockchain_reconciliation_minutes: 15,
            dispute_resolution_days: [20, 40],
            blockchain_dispute_hours: [2, 4],
            injected_errors: 0,
            fee_bp: 500,
        }
    }
}

impl BaselineStagePlan {
    pub fn validate(&self) -> Result<(), EconError> {
        if self.stages.is_empty() {
            return Err(EconError::BadPlan("no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.days[0] > s.days[1] {
                return Err(EconError::BadPlan(format!("{:?} range is empty", s.stage)));
            }
            if i > 0 {
                let p = &self.stages[i - 1];
                if s.stage <= p.stage || s.days[0] < p.days[0] || s.days[1] < p.days[1] {
                    return Err(EconError::BadPlan(format!("{:?} is out of order", s.stage)));
                }
            }
        }
        for r in [self.reconciliation_hours, self.dispute_resolution_days, self.blockchain_dispute_hours] {
            if r[0] > r[1] {
                return Err(EconError::BadPlan("labor constant range is empty".into()));
            }
        }
        Ok(())
    }
}

/// End day of every stage, in days with millisecond resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub stage_ends: Vec<Ratio<u64>>,
}

impl Timeline {
    pub fn final_day(&self) -> Ratio<u64> {
        *self.stage_ends.last().expect("validated plan has stages")
    }

    pub fn final_ms(&self) -> u64 {
        (self.final_day() * DAY_MS).to_integer()
    }
}

/// Draws each stage's end uniformly (at millisecond resolution) within
/// its range, never earlier than the previous stage's end.
pub fn simulate_traditional_timeline(rng: &mut SimRng, plan: &BaselineStagePlan) -> Timeline {
    let mut prev = 0u64;
    let stage_ends = plan
        .stages
        .iter()
        .map(|s| {
            let ms = rng
                .uniform_inclusive(s.days[0] as u64 * DAY_MS, s.days[1] as u64 * DAY_MS)
                .max(prev);
            prev = ms;
            Ratio::new(ms, DAY_MS)
        })
        .collect();
    Timeline { stage_ends }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BookEntry {
    pub counterparty_index: u16,
    pub amount: u64,
    pub fee: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyKind {
    AmountMismatch,
    FeeMismatch,
    MissingAtCounterparty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub tx: TxId,
    /// The operator whose record was examined first.
    pub recorded_by: OperatorId,
    pub counterparty: OperatorId,
    pub kind: DiscrepancyKind,
}

/// Each operator's own record of the transfers it took part in.
#[derive(Debug, Clone, Default)]
pub struct BilateralBooks {
    /// books[op][tx] as recorded by `op`
    pub books: Vec<BTreeMap<TxId, BookEntry>>,
}

impl BilateralBooks {
    pub fn record(workload: &Workload, fee_bp: u32) -> BilateralBooks {
        let mut books = vec![BTreeMap::new(); workload.operators.len()];
        for t in &workload.txs {
            let fee = mul_div_half_up(t.amount, fee_bp as u64, 10_000);
            books[t.sender as usize].insert(
                t.id,
                BookEntry {
                    counterparty_index: t.receiver,
                    amount: t.amount,
                    fee,
                },
            );
            books[t.receiver as usize].insert(
                t.id,
                BookEntry {
                    counterparty_index: t.sender,
                    amount: t.amount,
                    fee,
                },
            );
        }
        BilateralBooks { books }
    }

    /// Corrupts one side of `k` distinct transactions. Returns the ids hit.
    pub fn inject_errors(&mut self, workload: &Workload, k: usize, rng: &mut SimRng) -> Result<Vec<TxId>, EconError> {
        let n = workload.txs.len();
        if k > n {
            return Err(EconError::TooManyErrors { requested: k, available: n });
        }
        // Floyd's sampling of k distinct indices
        let mut picked = HashSet::with_capacity(k);
        let mut order = Vec::with_capacity(k);
        for j in (n - k)..n {
            let r = rng.uniform_inclusive(0, j as u64) as usize;
            let x = if picked.contains(&r) { j } else { r };
            picked.insert(x);
            order.push(x);
        }
        let mut hit = Vec::with_capacity(k);
        for i in order {
            let t = &workload.txs[i];
            let side = if rng.next_u64() & 1 == 0 { t.sender } else { t.receiver };
            let book = &mut self.books[side as usize];
            match rng.uniform_inclusive(0, 2) {
                0 => {
                    let e = book.get_mut(&t.id).expect("recorded");
                    e.amount += rng.uniform_inclusive(1, 1_000);
                }
                1 => {
                    let e = book.get_mut(&t.id).expect("recorded");
                    e.fee += rng.uniform_inclusive(1, 100);
                }
                _ => {
                    book.remove(&t.id);
                }
            }
            hit.push(t.id);
        }
        Ok(hit)
    }

    /// Matches each record against the counterparty's copy. At most one
    /// discrepancy is reported per transaction.
    pub fn reconcile(&self, operators: &[OperatorId]) -> Vec<Discrepancy> {
        let mut out = Vec::new();
        let disc = |tx: TxId, s: usize, r: usize, kind| Discrepancy {
            tx,
            recorded_by: operators[s].clone(),
            counterparty: operators[r].clone(),
            kind,
        };
        for (s, book) in self.books.iter().enumerate() {
            for (tx, e) in book {
                let r = e.counterparty_index as usize;
                match self.books[r].get(tx) {
                    Some(other) => {
                        // visit each matched pair once, from the lower index
                        if s > r {
                            continue;
                        }
                        if other.amount != e.amount {
                            out.push(disc(*tx, s, r, DiscrepancyKind::AmountMismatch));
                        } else if other.fee != e.fee {
                            out.push(disc(*tx, s, r, DiscrepancyKind::FeeMismatch));
                        }
                    }
                    None => out.push(disc(*tx, s, r, DiscrepancyKind::MissingAtCounterparty)),
                }
            }
        }
        out.sort_by(|a, b| a.tx.cmp(&b.tx));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineOutcome {
    pub txs: u64,
    /// Sum and count of per-transaction cycle times in ms, kept exact.
    pub cycle_ms_sum: u128,
    pub cycle_min_ms: u64,
    pub cycle_max_ms: u64,
    pub fees: u128,
    pub volume: u128,
    pub discrepancies: Vec<Discrepancy>,
    pub injected: u64,
    #[serde(skip)]
    pub disputes: DisputeLog,
}

impl BaselineOutcome {
    pub fn mean_cycle_days(&self) -> f64 {
        self.cycle_ms_sum as f64 / self.txs.max(1) as f64 / DAY_MS as f64
    }
}

/// Pushes the same transfers through the traditional pipeline: one sampled
/// timeline per transfer, bilateral books with `plan.injected_errors`
/// corrupted records, and one ledger-discrepancy dispute per mismatch.
pub fn simulate_baseline(workload: &Workload, plan: &BaselineStagePlan, seed: u64) -> Result<BaselineOutcome, EconError> {
    plan.validate()?;
    let mut rng = SimRng::new(seed);
    let mut sum = 0u128;
    let (mut lo, mut hi) = (u64::MAX, 0u64);
    let mut fees = 0u128;
    let mut volume = 0u128;
    for t in &workload.txs {
        let ms = simulate_traditional_timeline(&mut rng, plan).final_ms();
        sum += ms as u128;
        lo = lo.min(ms);
        hi = hi.max(ms);
        volume += t.amount as u128;
        fees += mul_div_half_up(t.amount, plan.fee_bp as u64, 10_000) as u128;
    }
    let mut books = BilateralBooks::record(workload, plan.fee_bp);
    books.inject_errors(workload, plan.injected_errors as usize, &mut rng)?;
    let discrepancies = books.reconcile(&workload.operators);
    let mut disputes = DisputeLog::default();
    let known: HashSet<TxId> = workload.txs.iter().map(|t| t.id).collect();
    for d in &discrepancies {
        disputes
            .open_dispute(d.tx, d.recorded_by.clone(), DisputeReason::LedgerDiscrepancy, 0, |id| known.contains(id))
            .expect("discrepancies name generated transfers");
    }
    Ok(BaselineOutcome {
        txs: workload.txs.len() as u64,
        cycle_ms_sum: sum,
        cycle_min_ms: if workload.txs.is_empty() { 0 } else { lo },
        cycle_max_ms: hi,
        fees,
        volume,
        discrepancies,
        injected: plan.injected_errors as u64,
        disputes,
    })
}
