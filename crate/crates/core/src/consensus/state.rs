use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{ConsensusMessage, Keyring, MsgKind};
use crate::ledger::{Block, Digest};

/// Committees are tracked with `u128` voter bitmasks.
pub const MAX_VALIDATORS: usize = 128;
const MAX_BUFFERED: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("a committee needs at least one validator")]
    ZeroValidators,
    #[error("committee of {0} exceeds the supported maximum")]
    TooManyValidators(usize),
    #[error("validator {me} is not the leader of view {view}")]
    NotLeader { me: u16, view: u64 },
    #[error("cannot propose an empty batch")]
    EmptyBatch,
    #[error("height {height} already proposed in view {view}")]
    DuplicateProposal { view: u64, height: u64 },
    #[error("height {0} is already committed with a different digest")]
    AlreadyCommitted(u64),
}

pub fn max_faulty(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// 2f + 1 with f = floor((n - 1) / 3).
pub fn quorum_threshold(n: usize) -> Result<usize, ConsensusError> {
    if n == 0 {
        return Err(ConsensusError::ZeroValidators);
    }
    Ok(2 * max_faulty(n) + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    PrePrepared,
    Prepared,
    Committed,
}

/// Counters for messages that were dropped without effect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusStats {
    pub bad_auth: u64,
    pub wrong_view: u64,
    pub duplicate: u64,
    pub not_from_leader: u64,
    pub already_committed: u64,
}

#[derive(Debug, Default)]
pub struct Step {
    pub outbound: Vec<ConsensusMessage>,
    pub committed: Vec<(u64, Digest)>,
    pub entered_view: Option<u64>,
}

fn bit(i: u16) -> u128 {
    1u128 << i
}

fn votes_for(list: &mut Vec<(Digest, u128)>, d: Digest) -> &mut u128 {
    let i = match list.iter().position(|(x, _)| *x == d) {
        Some(i) => i,
        None => {
            list.push((d, 0));
            list.len() - 1
        }
    };
    &mut list[i].1
}

#[derive(Debug, Clone)]
struct Slot {
    view: u64,
    phase: Phase,
    preprepared: Option<Digest>,
    proposed: bool,
    prepares: Vec<(Digest, u128)>,
    commits: Vec<(Digest, u128)>,
    seen_prepare: u128,
    seen_commit: u128,
    /// Highest (view, digest) this node prepared; survives view changes.
    locked: Option<(u64, Digest)>,
}

impl Slot {
    fn new(view: u64) -> Slot {
        Slot {
            view,
            phase: Phase::Idle,
            preprepared: None,
            proposed: false,
            prepares: Vec::new(),
            commits: Vec::new(),
            seen_prepare: 0,
            seen_commit: 0,
            locked: None,
        }
    }

    fn enter_view(&mut self, view: u64) {
        if self.view < view {
            *self = Slot {
                locked: self.locked,
                ..Slot::new(view)
            };
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ViewTally {
    senders: u128,
    /// height -> digest -> reporters
    reports: BTreeMap<u64, Vec<(Digest, u128)>>,
}

/// Per-validator PBFT state. Block payload checks are the caller's job:
/// a PrePrepare handed to [`ConsensusState::handle_message`] is assumed to
/// carry a digest whose block the caller has already validated.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    me: u16,
    n: usize,
    f: usize,
    quorum: usize,
    view: u64,
    vc_target: u64,
    timeout_ms: u64,
    last_view_change_at: u64,
    slots: BTreeMap<u64, Slot>,
    commit_log: BTreeMap<u64, Digest>,
    tip: u64,
    tallies: BTreeMap<u64, ViewTally>,
    buffered: Vec<ConsensusMessage>,
    keyring: Arc<Keyring>,
    pub stats: ConsensusStats,
}

impl ConsensusState {
    pub fn new(me: u16, keyring: Arc<Keyring>, timeout_ms: u64) -> Result<Self, ConsensusError> {
        let n = keyring.len();
        let quorum = quorum_threshold(n)?;
        if n > MAX_VALIDATORS {
            return Err(ConsensusError::TooManyValidators(n));
        }
        assert!((me as usize) < n, "validator index out of range");
        Ok(ConsensusState {
            me,
            n,
            f: max_faulty(n),
            quorum,
            view: 0,
            vc_target: 0,
            timeout_ms,
            last_view_change_at: 0,
            slots: BTreeMap::new(),
            commit_log: BTreeMap::new(),
            tip: 0,
            tallies: BTreeMap::new(),
            buffered: Vec::new(),
            keyring,
            stats: ConsensusStats::default(),
        })
    }

    pub fn me(&self) -> u16 {
        self.me
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn leader_of(&self, view: u64) -> u16 {
        (view % self.n as u64) as u16
    }

    pub fn is_leader(&self) -> bool {
        self.leader_of(self.view) == self.me
    }

    pub fn phase(&self, height: u64) -> Phase {
        if self.commit_log.contains_key(&height) {
            return Phase::Committed;
        }
        match self.slots.get(&height) {
            Some(s) if s.view == self.view => s.phase,
            _ => Phase::Idle,
        }
    }

    pub fn commit_log(&self) -> &BTreeMap<u64, Digest> {
        &self.commit_log
    }

    /// Highest height h such that 1..=h are all committed.
    pub fn committed_tip(&self) -> u64 {
        self.tip
    }

    pub fn is_final(&self, height: u64) -> bool {
        self.commit_log.contains_key(&height)
    }

    /// Highest height this node has pre-prepared, prepared or committed.
    pub fn highest_known(&self) -> u64 {
        let s = self.slots.keys().next_back().copied().unwrap_or(0);
        let c = self.commit_log.keys().next_back().copied().unwrap_or(0);
        s.max(c)
    }

    fn sign(&self, kind: MsgKind, view: u64, height: u64, d: Digest) -> ConsensusMessage {
        self.keyring.sign(kind, view, height, d, self.me)
    }

    fn slot(&mut self, height: u64) -> &mut Slot {
        let view = self.view;
        let s = self.slots.entry(height).or_insert_with(|| Slot::new(view));
        s.enter_view(view);
        s
    }

    /// Leader entry point: announces `block` at its header height.
    pub fn propose(&mut self, block: &Block) -> Result<Step, ConsensusError> {
        if !self.is_leader() {
            return Err(ConsensusError::NotLeader {
                me: self.me,
                view: self.view,
            });
        }
        if block.txs.is_empty() {
            return Err(ConsensusError::EmptyBatch);
        }
        let height = block.header.height;
        let digest = block.digest();
        let view = self.view;
        let mut step = Step::default();
        if let Some(c) = self.commit_log.get(&height) {
            if *c != digest {
                return Err(ConsensusError::AlreadyCommitted(height));
            }
            // re-announce so peers that missed the commit can catch up
            step.outbound.push(self.sign(MsgKind::PrePrepare, view, height, digest));
            step.outbound.push(self.sign(MsgKind::Commit, view, height, digest));
            return Ok(step);
        }
        let me = self.me;
        let s = self.slot(height);
        if s.proposed || s.preprepared.is_some() {
            return Err(ConsensusError::DuplicateProposal { view, height });
        }
        s.proposed = true;
        s.preprepared = Some(digest);
        s.phase = Phase::PrePrepared;
        *votes_for(&mut s.prepares, digest) |= bit(me);
        step.outbound.push(self.sign(MsgKind::PrePrepare, view, height, digest));
        self.advance(height, &mut step);
        Ok(step)
    }

    pub fn handle_message(&mut self, msg: &ConsensusMessage, now: u64) -> Step {
        let mut step = Step::default();
        if (msg.sender as usize) >= self.n || !self.keyring.verify(msg) {
            self.stats.bad_auth += 1;
            return step;
        }
        if msg.kind == MsgKind::ViewChange {
            self.on_view_change(msg, now, &mut step);
            return step;
        }
        if msg.view != self.view {
            if msg.view > self.view && msg.view == self.vc_target && self.buffered.len() < MAX_BUFFERED {
                self.buffered.push(*msg);
            } else {
                self.stats.wrong_view += 1;
            }
            return step;
        }
        self.on_phase_message(msg, &mut step);
        step
    }

    fn on_phase_message(&mut self, msg: &ConsensusMessage, step: &mut Step) {
        let (view, h, d) = (msg.view, msg.height, msg.block_digest);
        if let Some(c) = self.commit_log.get(&h).copied() {
            if msg.kind == MsgKind::PrePrepare && msg.sender == self.leader_of(view) && c == d && msg.sender != self.me {
                step.outbound.push(self.sign(MsgKind::Prepare, view, h, d));
                step.outbound.push(self.sign(MsgKind::Commit, view, h, d));
            } else {
                self.stats.already_committed += 1;
            }
            return;
        }
        let me = self.me;
        let leader = self.leader_of(view);
        match msg.kind {
            MsgKind::PrePrepare => {
                if msg.sender != leader {
                    self.stats.not_from_leader += 1;
                    return;
                }
                let s = self.slot(h);
                if s.preprepared.is_some() {
                    self.stats.duplicate += 1;
                    return;
                }
                s.preprepared = Some(d);
                s.phase = Phase::PrePrepared;
                *votes_for(&mut s.prepares, d) |= bit(leader) | bit(me);
                s.seen_prepare |= bit(me);
                step.outbound.push(self.sign(MsgKind::Prepare, view, h, d));
            }
            MsgKind::Prepare => {
                let s = self.slot(h);
                if s.seen_prepare & bit(msg.sender) != 0 {
                    self.stats.duplicate += 1;
                    return;
                }
                s.seen_prepare |= bit(msg.sender);
                *votes_for(&mut s.prepares, d) |= bit(msg.sender);
            }
            MsgKind::Commit => {
                let s = self.slot(h);
                if s.seen_commit & bit(msg.sender) != 0 {
                    self.stats.duplicate += 1;
                    return;
                }
                s.seen_commit |= bit(msg.sender);
                *votes_for(&mut s.commits, d) |= bit(msg.sender);
            }
            MsgKind::ViewChange => unreachable!("handled separately"),
        }
        self.advance(h, step);
    }

    /// Applies any quorum that has formed at `height`.
    fn advance(&mut self, height: u64, step: &mut Step) {
        let (q, me, view) = (self.quorum, self.me, self.view);
        let Some(s) = self.slots.get_mut(&height) else {
            return;
        };
        if s.phase == Phase::PrePrepared {
            let d = s.preprepared.expect("pre-prepared slot has a digest");
            let n = s.prepares.iter().find(|(x, _)| *x == d).map_or(0, |(_, v)| v.count_ones());
            if n as usize >= q {
                s.phase = Phase::Prepared;
                s.locked = Some((view, d));
                s.seen_commit |= bit(me);
                *votes_for(&mut s.commits, d) |= bit(me);
                step.outbound.push(self.keyring.sign(MsgKind::Commit, view, height, d, me));
            }
        }
        let s = self.slots.get_mut(&height).expect("slot present");
        // a commit certificate is sufficient on its own: 2f+1 commit votes
        // include at least f+1 honest validators that prepared the digest
        if let Some((d, _)) = s.commits.iter().find(|(_, v)| v.count_ones() as usize >= q) {
            let d = *d;
            self.slots.remove(&height);
            self.commit_log.insert(height, d);
            while self.commit_log.contains_key(&(self.tip + 1)) {
                self.tip += 1;
            }
            step.committed.push((height, d));
        }
    }

    fn view_change_messages(&self, target: u64) -> Vec<ConsensusMessage> {
        let mut out = Vec::new();
        let anchor = self.commit_log.get(&self.tip).copied().unwrap_or(Digest::ZERO);
        out.push(self.sign(MsgKind::ViewChange, target, self.tip, anchor));
        let above = self.tip + 1..;
        for (&h, &d) in self.commit_log.range(above.clone()) {
            out.push(self.sign(MsgKind::ViewChange, target, h, d));
        }
        for (&h, s) in self.slots.range(above) {
            if let Some((_, d)) = s.locked {
                out.push(self.sign(MsgKind::ViewChange, target, h, d));
            }
        }
        out
    }

    fn record_view_change(&mut self, m: &ConsensusMessage) -> bool {
        let t = self.tallies.entry(m.view).or_default();
        let list = t.reports.entry(m.height).or_default();
        if list.iter().any(|(_, v)| v & bit(m.sender) != 0) {
            return false;
        }
        t.senders |= bit(m.sender);
        *votes_for(list, m.block_digest) |= bit(m.sender);
        true
    }

    fn vote_for_view(&mut self, target: u64, now: u64, step: &mut Step) {
        self.vc_target = target;
        self.last_view_change_at = now;
        for m in self.view_change_messages(target) {
            self.record_view_change(&m);
            step.outbound.push(m);
        }
        self.maybe_enter_view(target, now, step);
    }

    fn on_view_change(&mut self, m: &ConsensusMessage, now: u64, step: &mut Step) {
        // late reports for the view just entered are still recorded
        if m.view < self.view {
            self.stats.wrong_view += 1;
            return;
        }
        if !self.record_view_change(m) {
            self.stats.duplicate += 1;
            return;
        }
        let senders = self.tallies[&m.view].senders.count_ones() as usize;
        if senders > self.f && self.vc_target < m.view {
            self.vote_for_view(m.view, now, step);
        } else {
            self.maybe_enter_view(m.view, now, step);
        }
    }

    fn maybe_enter_view(&mut self, target: u64, now: u64, step: &mut Step) {
        let Some(t) = self.tallies.get(&target) else {
            return;
        };
        if target <= self.view || (t.senders.count_ones() as usize) < self.quorum {
            return;
        }
        self.view = target;
        self.vc_target = self.vc_target.max(target);
        self.last_view_change_at = now;
        step.entered_view = Some(target);
        self.tallies = self.tallies.split_off(&target);
        for s in self.slots.values_mut() {
            s.enter_view(target);
        }
        let pending = std::mem::take(&mut self.buffered);
        for m in pending {
            if m.view == self.view {
                self.on_phase_message(&m, step);
            } else if m.view > self.view && m.view == self.vc_target {
                self.buffered.push(m);
            }
        }
    }

    /// For the view just entered: height -> digests reported in view-change
    /// messages, with reporter counts, most reported first.
    pub fn view_change_reports(&self, view: u64) -> BTreeMap<u64, Vec<(Digest, u32)>> {
        let Some(t) = self.tallies.get(&view) else {
            return BTreeMap::new();
        };
        t.reports
            .iter()
            .map(|(&h, list)| {
                let mut v: Vec<(Digest, u32)> = list
                    .iter()
                    .filter(|(d, _)| *d != Digest::ZERO)
                    .map(|(d, m)| (*d, m.count_ones()))
                    .collect();
                v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.as_bytes().cmp(b.0.as_bytes())));
                (h, v)
            })
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }

    /// Timer hook. `oldest_pending` is when the oldest transaction still
    /// waiting for commit became ready, or `None` if nothing waits. The
    /// timer restarts at every view change, so consecutive failures move
    /// the target view up one at a time.
    pub fn on_timeout(&mut self, now: u64, oldest_pending: Option<u64>) -> Step {
        let mut step = Step::default();
        let Some(since) = oldest_pending else {
            return step;
        };
        let basis = since.max(self.last_view_change_at);
        if now < basis + self.timeout_ms {
            return step;
        }
        let target = self.vc_target.max(self.view) + 1;
        self.vote_for_view(target, now, &mut step);
        step
    }

    /// Adopts a peer's commit log after state transfer.
    pub fn sync_from(&mut self, view: u64, commits: &BTreeMap<u64, Digest>, now: u64) {
        for (&h, &d) in commits {
            self.commit_log.entry(h).or_insert(d);
            self.slots.remove(&h);
        }
        while self.commit_log.contains_key(&(self.tip + 1)) {
            self.tip += 1;
        }
        if view >= self.view {
            if view > self.view {
                self.view = view;
                for s in self.slots.values_mut() {
                    s.enter_view(view);
                }
                self.buffered.retain(|m| m.view > view);
            }
            // view changes started while cut off are abandoned
            self.vc_target = view;
            self.last_view_change_at = now;
        }
    }
}
