use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::config::{SimConfig, Stage, WorkloadProfile};
use super::rng::SimRng;
use crate::ledger::{Currency, OperatorId, TxId};

const DAY_MS: f64 = 86_400_000.0;

/// Uniform draw from the configured range of `stage`, both ends included.
pub fn sample_latency(stage: Stage, rng: &mut SimRng, config: &SimConfig) -> u64 {
    let [lo, hi] = config.stage_range(stage);
    rng.uniform_inclusive(lo, hi)
}

/// Mean over a full period of ((1 + cos x) / 2)^k.
fn mean_raised_cosine(k: f64) -> f64 {
    // the integrand is smooth and periodic, so the trapezoid rule
    // converges geometrically
    const STEPS: usize = 4_096;
    (0..STEPS)
        .map(|i| ((1.0 + (2.0 * PI * i as f64 / STEPS as f64).cos()) / 2.0).powf(k))
        .sum::<f64>()
        / STEPS as f64
}

/// Exponent k for which the daily profile p * ((1 + cos x) / 2)^k has
/// mean 1, so the peak is `p` times the mean.
pub fn peak_exponent(peak_multiplier: f64) -> f64 {
    if peak_multiplier <= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while peak_multiplier * mean_raised_cosine(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if peak_multiplier * mean_raised_cosine(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Instantaneous rate relative to the mean at virtual time `t_ms`.
pub fn rate_factor(profile: &WorkloadProfile, k: f64, t_ms: f64) -> f64 {
    let theta = 2.0 * PI * (t_ms - profile.peak_at_ms as f64) / DAY_MS;
    profile.peak_multiplier * ((1.0 + theta.cos()) / 2.0).powf(k)
}

/// Peak rate in transactions per second.
pub fn peak_rate_per_sec(profile: &WorkloadProfile) -> f64 {
    profile.mean_rate_per_sec() * profile.peak_multiplier
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkTx {
    pub idx: u32,
    pub id: TxId,
    pub created_at: u64,
    /// Indices into [`Workload::operators`].
    pub sender: u16,
    pub receiver: u16,
    pub amount: u64,
    pub currency: Currency,
    pub tainted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub operators: Vec<OperatorId>,
    pub txs: Vec<WorkTx>,
}

fn pick(rng: &mut SimRng, from: &[u16]) -> u16 {
    from[rng.uniform_inclusive(0, from.len() as u64 - 1) as usize]
}

fn pick_pair(rng: &mut SimRng, from: &[u16]) -> (u16, u16) {
    let a = rng.uniform_inclusive(0, from.len() as u64 - 1) as usize;
    // draw the receiver from the remaining operators
    let mut b = rng.uniform_inclusive(0, from.len() as u64 - 2) as usize;
    if b >= a {
        b += 1;
    }
    (from[a], from[b])
}

/// Poisson arrivals (thinned against the daily profile) in creation order.
/// `tainted` lists operators that tainted transactions draw one party from;
/// every other transaction uses only the remaining operators.
pub fn generate_workload(profile: &WorkloadProfile, tainted: &[OperatorId], rng: &mut SimRng) -> Workload {
    let operators = profile.operator_ids();
    let mut txs = Vec::new();
    let cap = profile.max_txs.unwrap_or(u64::MAX);
    let peak_per_ms = peak_rate_per_sec(profile) / 1_000.0;
    if profile.tx_per_day == 0 || cap == 0 || peak_per_ms <= 0.0 {
        return Workload { operators, txs };
    }
    let (bad, clean): (Vec<u16>, Vec<u16>) =
        (0..operators.len() as u16).partition(|&i| tainted.contains(&operators[i as usize]));
    let k = peak_exponent(profile.peak_multiplier);
    let mut t = 0.0f64;
    loop {
        t += rng.exp(peak_per_ms);
        if t >= profile.duration_ms as f64 || txs.len() as u64 >= cap {
            break;
        }
        if k > 0.0 && rng.next_f64() * profile.peak_multiplier >= rate_factor(profile, k, t) {
            continue;
        }
        let idx = txs.len() as u32;
        let is_tainted = profile.tainted_share_bp > 0
            && !bad.is_empty()
            && rng.uniform_inclusive(0, 9_999) < profile.tainted_share_bp as u64;
        let (sender, receiver) = if is_tainted {
            let b = pick(rng, &bad);
            let c = pick(rng, &clean);
            if rng.next_u64() & 1 == 0 {
                (b, c)
            } else {
                (c, b)
            }
        } else {
            pick_pair(rng, &clean)
        };
        let amount = rng.uniform_inclusive(profile.amount_range[0], profile.amount_range[1]);
        let currency = if profile.currencies.len() == 1 {
            profile.currencies[0]
        } else {
            profile.currencies[rng.uniform_inclusive(0, profile.currencies.len() as u64 - 1) as usize]
        };
        let mut id = [0u8; 16];
        id[..8].copy_from_slice(&(idx as u64).to_be_bytes());
        id[8..].copy_from_slice(&rng.next_u64().to_be_bytes());
        txs.push(WorkTx {
            idx,
            id: TxId(id),
            created_at: t as u64,
            sender,
            receiver,
            amount,
            currency,
            tainted: is_tainted,
        });
    }
    Workload { operators, txs }
}
