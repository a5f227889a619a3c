//! Single-threaded hot path: screen, validate, apply, serialize, hash and
//! append, with no simulated latency.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::ledger::{state_digest, Block, Digest, HashChain};
use crate::settlement::LedgerState;
use crate::simnet::{generate_workload, ExecCtx, SimConfig, SimRng, Workload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchLedger {
    pub txs: u64,
    pub blocks: u64,
    pub executed: u64,
    pub rejected: u64,
    pub head: Digest,
    pub state: Digest,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub ledger: BenchLedger,
    /// Wall-clock section; varies between runs.
    pub wall_secs: f64,
    pub tx_per_sec: f64,
}

/// Workload of exactly `n` transactions (fewer only if the profile's
/// operators cannot produce any) drawn from `cfg`.
pub fn bench_workload(cfg: &SimConfig, n: u64) -> Workload {
    let mut profile = cfg.workload.clone();
    profile.max_txs = Some(n);
    profile.peak_multiplier = 1.0;
    let rate = profile.mean_rate_per_sec().max(1.0);
    profile.duration_ms = ((n as f64 / rate) * 2_000.0) as u64 + 1_000;
    generate_workload(&profile, &cfg.tainted_operators(), &mut SimRng::new(cfg.seed))
}

/// Times the hot path over `workload`, excluding workload generation.
pub fn run_bench(cfg: &SimConfig, workload: Workload) -> BenchReport {
    let workload = Arc::new(workload);
    let ctx = ExecCtx::new(cfg, workload.clone());
    let mut state = LedgerState::with_balances(
        workload
            .operators
            .iter()
            .map(|o| (o.clone(), cfg.workload.initial_balance as i128)),
    );
    let mut chain = HashChain::new();
    let (mut executed, mut rejected) = (0u64, 0u64);
    let idx: Vec<u32> = (0..workload.txs.len() as u32).collect();
    let start = Instant::now();
    for batch in idx.chunks(cfg.max_block_txs.max(1)) {
        let ts = workload.txs[*batch.last().expect("non-empty chunk") as usize].created_at;
        let out = ctx.execute(&state, batch, ts).expect("fresh oracle view");
        for r in &out.records {
            if r.compliance_verdict.is_rejected() {
                rejected += 1;
            } else {
                executed += 1;
            }
        }
        let block = Block::assemble(chain.tip_height() + 1, ts, chain.head(), out.records);
        chain.push_block(&block).expect("extends head");
        state = out.state;
    }
    let wall = start.elapsed().as_secs_f64();
    let txs = workload.txs.len() as u64;
    BenchReport {
        ledger: BenchLedger {
            txs,
            blocks: chain.tip_height(),
            executed,
            rejected,
            head: chain.head(),
            state: state_digest(&state),
        },
        wall_secs: wall,
        tx_per_sec: if wall > 0.0 { txs as f64 / wall } else { f64::INFINITY },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::verify_chain;

    #[test]
    fn single_tx() {
        let cfg = SimConfig::default();
        let r = run_bench(&cfg, bench_workload(&cfg, 1));
        assert_eq!(r.ledger.txs, 1);
        assert_eq!(r.ledger.blocks, 1);
        assert!(r.tx_per_sec > 0.0);
    }

    #[test]
    fn ledger_content_is_reproducible() {
        let cfg = SimConfig::default();
        let a = run_bench(&cfg, bench_workload(&cfg, 2_000));
        let b = run_bench(&cfg, bench_workload(&cfg, 2_000));
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.ledger.txs, 2_000);
        assert_eq!(a.ledger.executed + a.ledger.rejected, 2_000);
    }

    #[test]
    fn chain_verifies() {
        let mut cfg = SimConfig::default();
        cfg.max_block_txs = 7;
        let wl = bench_workload(&cfg, 50);
        let ctx = ExecCtx::new(&cfg, Arc::new(wl.clone()));
        let r = run_bench(&cfg, wl);
        assert_eq!(r.ledger.blocks, 8);
        // rebuild to check the produced chain against the verifier
        let mut chain = HashChain::new();
        let mut state = LedgerState::with_balances(
            ctx.workload.operators.iter().map(|o| (o.clone(), cfg.workload.initial_balance as i128)),
        );
        let idx: Vec<u32> = (0..50).collect();
        for b in idx.chunks(7) {
            let ts = ctx.workload.txs[*b.last().unwrap() as usize].created_at;
            let out = ctx.execute(&state, b, ts).unwrap();
            chain.append_block(out.records, ts).unwrap();
            state = out.state;
        }
        assert!(verify_chain(&chain).valid);
        assert_eq!(chain.head(), r.ledger.head);
    }
}
