use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use super::config::Behavior;
use super::exec::{Deltas, ExecCtx};
use crate::consensus::{ConsensusState, Keyring};
use crate::ledger::{compute_tx_hash, payload_root, Block, Digest, HashChain};
use crate::settlement::LedgerState;

/// A block this node has checked by re-execution, with the state it leads to.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub block: Arc<Block>,
    pub digest: Digest,
    pub txs: Vec<u32>,
    pub state: Arc<LedgerState>,
    pub deltas: Arc<Deltas>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invalid {
    UnknownParent,
    BadTimestamp,
    UnknownTx,
    DuplicateTx,
    StaleOracle,
    Mismatch,
}

#[derive(Debug, Clone, Copy)]
pub struct PendingAppend {
    pub digest: Digest,
    pub committed_at: u64,
    pub due: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Role {
    pub equivocate: bool,
    pub silent: bool,
    pub garbage: bool,
}

impl Role {
    pub fn from_behaviors(b: &[Behavior]) -> Role {
        let mut r = Role::default();
        for x in b {
            match x {
                Behavior::ByzantineEquivocate => r.equivocate = true,
                Behavior::ByzantineSilence => r.silent = true,
                Behavior::ByzantineGarbage => r.garbage = true,
                _ => {}
            }
        }
        r
    }

    pub fn byzantine(&self) -> bool {
        self.equivocate || self.silent || self.garbage
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub idx: u16,
    pub role: Role,
    pub crashed: bool,
    pub partitions: Vec<(u64, u64)>,
    pub cs: ConsensusState,
    pub chain: HashChain,
    pub state: Arc<LedgerState>,
    /// Ready, not yet appended transactions keyed by (ready time, index).
    pub pool: BTreeSet<(u64, u32)>,
    /// Leader only: pool entries not yet placed in a proposal.
    pub proposable: BTreeSet<(u64, u32)>,
    pub candidates: BTreeMap<u64, Vec<Candidate>>,
    /// Payloads seen but not (yet) checked.
    pub known: BTreeMap<u64, Vec<Arc<Block>>>,
    pub to_append: BTreeMap<u64, PendingAppend>,
    pub last_append_at: u64,
    /// Highest block this leader has proposed on top of its chain.
    pub proposal_tip: Option<(u64, Digest)>,
    pub garbage_sent_view: Option<u64>,
    pub tick_armed: bool,
    pub append_wakeup: Option<u64>,
}

impl Node {
    pub fn new(
        idx: u16,
        behaviors: &[Behavior],
        keyring: Arc<Keyring>,
        timeout_ms: u64,
        genesis: Arc<LedgerState>,
    ) -> Node {
        let partitions = behaviors
            .iter()
            .filter_map(|b| match b {
                Behavior::Partition { from_ms, to_ms } => Some((*from_ms, *to_ms)),
                _ => None,
            })
            .collect();
        Node {
            idx,
            role: Role::from_behaviors(behaviors),
            crashed: false,
            partitions,
            cs: ConsensusState::new(idx, keyring, timeout_ms).expect("committee size checked by config"),
            chain: HashChain::new(),
            state: genesis,
            pool: BTreeSet::new(),
            proposable: BTreeSet::new(),
            candidates: BTreeMap::new(),
            known: BTreeMap::new(),
            to_append: BTreeMap::new(),
            last_append_at: 0,
            proposal_tip: None,
            garbage_sent_view: None,
            tick_armed: false,
            append_wakeup: None,
        }
    }

    pub fn partitioned_at(&self, t: u64) -> bool {
        self.partitions.iter().any(|&(a, b)| a <= t && t < b)
    }

    pub fn live_at(&self, t: u64) -> bool {
        !self.crashed && !self.partitioned_at(t)
    }

    pub fn candidate(&self, height: u64, digest: &Digest) -> Option<&Candidate> {
        self.candidates.get(&height)?.iter().find(|c| &c.digest == digest)
    }

    /// Any payload this node holds for (height, digest).
    pub fn payload(&self, height: u64, digest: &Digest) -> Option<Arc<Block>> {
        if let Some(c) = self.candidate(height, digest) {
            return Some(c.block.clone());
        }
        if let Some(b) = self.known.get(&height).and_then(|v| v.iter().find(|b| &b.digest() == digest)) {
            return Some(b.clone());
        }
        if height <= self.chain.tip_height() && self.chain.header(height)?.digest() == *digest {
            return self.chain.block(height)?.ok().map(Arc::new);
        }
        None
    }

    pub fn remember(&mut self, block: Arc<Block>) {
        let h = block.header.height;
        if h <= self.chain.tip_height() {
            return;
        }
        let d = block.digest();
        if self.candidate(h, &d).is_some() {
            return;
        }
        let v = self.known.entry(h).or_default();
        if !v.iter().any(|b| b.digest() == d) {
            v.push(block);
        }
    }

    /// Parent state for a block at `height` linking to `prev`.
    fn parent(&self, height: u64, prev: &Digest) -> Option<(Arc<LedgerState>, u64)> {
        let tip = self.chain.tip_height();
        if height == tip + 1 && *prev == self.chain.head() {
            let ts = self.chain.header(tip).map(|h| h.timestamp_ms).unwrap_or(0);
            return Some((self.state.clone(), ts));
        }
        let c = self.candidate(height.checked_sub(1)?, prev)?;
        Some((c.state.clone(), c.block.header.timestamp_ms))
    }

    /// Re-executes `block` against its parent and records it as a
    /// candidate. `ready_at[i]` is when transaction `i` reached the pools.
    pub fn check_block(
        &mut self,
        block: &Arc<Block>,
        now: u64,
        ready_at: &[u64],
        ctx: &ExecCtx,
    ) -> Result<Candidate, Invalid> {
        let h = &block.header;
        let digest = block.digest();
        if let Some(c) = self.candidate(h.height, &digest) {
            return Ok(c.clone());
        }
        let (parent, parent_ts) = self.parent(h.height, &h.prev_hash).ok_or(Invalid::UnknownParent)?;
        if h.timestamp_ms < parent_ts || h.timestamp_ms > now {
            return Err(Invalid::BadTimestamp);
        }
        let mut seen = HashSet::with_capacity(block.txs.len());
        let mut txs = Vec::with_capacity(block.txs.len());
        for r in &block.txs {
            let &i = ctx.index.get(&r.tx_id).ok_or(Invalid::UnknownTx)?;
            let ready = ready_at[i as usize];
            if ready > h.timestamp_ms || !self.pool.contains(&(ready, i)) {
                return Err(Invalid::UnknownTx);
            }
            if !seen.insert(i) {
                return Err(Invalid::DuplicateTx);
            }
            txs.push(i);
        }
        if txs.is_empty() {
            return Err(Invalid::Mismatch);
        }
        let out = ctx.execute(&parent, &txs, h.timestamp_ms).ok_or(Invalid::StaleOracle)?;
        if out.records != block.txs {
            return Err(Invalid::Mismatch);
        }
        let leaves: Vec<Digest> = out.records.iter().map(compute_tx_hash).collect();
        if payload_root(&leaves) != h.payload_root || h.tx_count as usize != out.records.len() {
            return Err(Invalid::Mismatch);
        }
        let c = Candidate {
            block: block.clone(),
            digest,
            txs,
            state: Arc::new(out.state),
            deltas: Arc::new(out.deltas),
        };
        self.insert_candidate(c.clone());
        Ok(c)
    }

    pub fn insert_candidate(&mut self, c: Candidate) {
        let h = c.block.header.height;
        if let Some(v) = self.known.get_mut(&h) {
            v.retain(|b| b.digest() != c.digest);
            if v.is_empty() {
                self.known.remove(&h);
            }
        }
        let v = self.candidates.entry(h).or_default();
        if !v.iter().any(|x| x.digest == c.digest) {
            v.push(c);
        }
    }

    /// Drops bookkeeping for heights at or below the chain tip.
    pub fn prune(&mut self) {
        let tip = self.chain.tip_height();
        self.candidates = self.candidates.split_off(&(tip + 1));
        self.known = self.known.split_off(&(tip + 1));
        if matches!(self.proposal_tip, Some((h, _)) if h <= tip) {
            self.proposal_tip = None;
        }
    }

    /// Transactions that sit in candidate blocks on the path ending at
    /// `proposal_tip`.
    pub fn in_flight(&self) -> HashSet<u32> {
        let mut out = HashSet::new();
        let Some((mut h, mut d)) = self.proposal_tip else {
            return out;
        };
        while h > self.chain.tip_height() {
            let Some(c) = self.candidate(h, &d) else { break };
            out.extend(c.txs.iter().copied());
            d = c.block.header.prev_hash;
            h -= 1;
        }
        out
    }

    /// Parent for the next fresh proposal: (height, digest, state, ts).
    pub fn proposal_parent(&self) -> (u64, Digest, Arc<LedgerState>, u64) {
        if let Some((h, d)) = self.proposal_tip {
            if let Some(c) = self.candidate(h, &d) {
                return (h, d, c.state.clone(), c.block.header.timestamp_ms);
            }
        }
        let tip = self.chain.tip_height();
        let ts = self.chain.header(tip).map(|h| h.timestamp_ms).unwrap_or(0);
        (tip, self.chain.head(), self.state.clone(), ts)
    }
}
