use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::config::{Behavior, ConfigError, SimConfig, Stage};
use super::exec::ExecCtx;
use super::node::{Candidate, Node, PendingAppend};
use super::reconcile::{reconcile_nodes, NodeSnapshot, ReconciliationReport};
use super::rng::SimRng;
use super::trace::{Event, FinishedTrace, Trace, TraceSink, Wide};
use super::workload::{generate_workload, sample_latency, Workload};
use crate::consensus::{ConsensusMessage, Keyring, MsgKind, Step};
use crate::ledger::{state_digest, verify_chain, Block, ChainVerdict, ComplianceVerdict, Digest, HashChain, TxId, TxStatus};
use crate::settlement::{
    advance_status, DisputeLog, DisputeReason, LedgerState, LifecycleEvent, Resolution, TxLifecycle,
};

/// Virtual time allowed after the workload window for in-flight work.
pub const DRAIN_MS: u64 = 600_000;

const WORKLOAD_SALT: u64 = 0x5745_4c4f_4144;
const GARBAGE_SALT: u64 = 0x4741_5242;
const DISPUTE_SALT: u64 = 0x4449_5350;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub sum: u128,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub p50: u64,
    pub p99: u64,
}

impl LatencySummary {
    pub fn from_samples(mut v: Vec<u64>) -> LatencySummary {
        if v.is_empty() {
            return LatencySummary::default();
        }
        v.sort_unstable();
        let pct = |p: f64| v[(((v.len() - 1) as f64) * p).round() as usize];
        let sum: u128 = v.iter().map(|&x| x as u128).sum();
        LatencySummary {
            count: v.len() as u64,
            sum,
            min: v[0],
            max: v[v.len() - 1],
            mean: sum as f64 / v.len() as f64,
            p50: pct(0.5),
            p99: pct(0.99),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimMetrics {
    pub txs_generated: u64,
    pub txs_executed: u64,
    pub txs_rejected: u64,
    /// Generated but never appended on the observer's chain.
    pub txs_unsettled: u64,
    pub rejections: BTreeMap<String, u64>,
    pub tainted_generated: u64,
    pub tainted_executed: u64,
    pub blocks: u64,
    pub final_view: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub invalid_proposals: u64,
    pub conflicting_commits: u64,
    pub bad_auth: u64,
    pub duplicates: u64,
    pub pipeline_ms: LatencySummary,
    pub pipeline_bracket: [u64; 2],
    pub pipeline_out_of_bracket: u64,
    pub end_to_end_ms: LatencySummary,
    pub end_to_end_bracket: [u64; 2],
    pub end_to_end_out_of_bracket: u64,
    pub throughput_tps: f64,
    pub disputes_opened: u64,
    pub disputes_resolved: u64,
    pub tamper_applied: u64,
    pub virtual_end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TxOutcome {
    pub tx: TxId,
    pub tainted: bool,
    pub height: Option<u64>,
    pub verdict: Option<ComplianceVerdict>,
    pub lifecycle: TxLifecycle,
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub index: u16,
    pub byzantine: bool,
    pub faulty: bool,
    pub crashed: bool,
    pub view: u64,
    pub chain: HashChain,
    pub state: LedgerState,
    pub state_digest: Digest,
    pub verdict: ChainVerdict,
    pub commit_log: BTreeMap<u64, Digest>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub observer: u16,
    pub initial_total: i128,
    pub trace: FinishedTrace,
    pub metrics: SimMetrics,
    pub nodes: Vec<NodeReport>,
    pub outcomes: Vec<TxOutcome>,
    pub disputes: DisputeLog,
    pub reconcile: ReconciliationReport,
    pub workload: Arc<Workload>,
}

#[derive(Debug)]
struct Envelope {
    from: u16,
    msgs: Vec<ConsensusMessage>,
    payloads: Vec<Arc<Block>>,
}

#[derive(Debug)]
enum Ev {
    Arrive(u32),
    Ready(u32),
    Propose(u16),
    Deliver(u16, Arc<Envelope>),
    Append(u16),
    Tick(u16),
    Crash(u16),
    PartitionStart(u16, Behavior),
    Heal(u16),
    Final(u32),
}

struct Queued {
    t: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.seq) == (o.t, o.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    // min-heap on (time, insertion order)
    fn cmp(&self, o: &Self) -> Ordering {
        (o.t, o.seq).cmp(&(self.t, self.seq))
    }
}

/// Delivery times of the three voting phases for one (view, height) round.
#[derive(Debug, Clone, Copy)]
struct Round {
    phase: [u64; 3],
    append: u64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    ctx: ExecCtx,
    keyring: Arc<Keyring>,
    nodes: Vec<Node>,
    queue: BinaryHeap<Queued>,
    seq: u64,
    now: u64,
    horizon: u64,
    tick_ms: u64,
    rng: SimRng,
    garbage_rng: SimRng,
    dispute_rng: SimRng,
    rounds: HashMap<(u64, u64), Round>,
    last_phase: [u64; 3],
    ready_at: Vec<u64>,
    propose_pending: Vec<bool>,
    trace: Trace,
    observer: u16,
    global_commits: HashMap<u64, Digest>,
    metrics: SimMetrics,
    lifecycles: Vec<TxLifecycle>,
    heights: Vec<Option<u64>>,
    verdicts: Vec<Option<ComplianceVerdict>>,
    pipeline: Vec<u64>,
    end_to_end: Vec<u64>,
    first_created: Option<u64>,
    last_append: u64,
    disputes: DisputeLog,
    open_disputes: HashMap<u32, u64>,
    fatal: Option<String>,
}

/// The client workload a run with `cfg` submits.
pub fn run_workload(cfg: &SimConfig) -> Workload {
    generate_workload(&cfg.workload, &cfg.tainted_operators(), &mut SimRng::new(cfg.seed ^ WORKLOAD_SALT))
}

/// Runs one seeded simulation to completion.
pub fn run_simulation(cfg: &SimConfig, sink: TraceSink) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let workload = Arc::new(run_workload(cfg));
    let n = cfg.validators;
    let keyring = Arc::new(Keyring::derive(cfg.seed, n));
    let genesis = Arc::new(LedgerState::with_balances(
        workload
            .operators
            .iter()
            .map(|o| (o.clone(), cfg.workload.initial_balance as i128)),
    ));
    let initial_total = genesis.total();
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let b: Vec<Behavior> = cfg.behavior_of(i).into_iter().cloned().collect();
            Node::new(i, &b, keyring.clone(), cfg.timeout(), genesis.clone())
        })
        .collect();
    let observer = (0..n)
        .find(|&i| cfg.behavior_of(i).is_empty())
        .expect("validated: one fault-free validator");
    let txs = workload.txs.len();
    let lat = &cfg.latency;
    let mut sim = Sim {
        cfg,
        ctx: ExecCtx::new(cfg, workload.clone()),
        keyring,
        nodes,
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        horizon: cfg.workload.duration_ms.saturating_add(DRAIN_MS),
        tick_ms: (cfg.timeout() / 4).max(1),
        rng: SimRng::new(cfg.seed),
        garbage_rng: SimRng::new(cfg.seed ^ GARBAGE_SALT),
        dispute_rng: SimRng::new(cfg.seed ^ DISPUTE_SALT),
        rounds: HashMap::new(),
        last_phase: [0; 3],
        ready_at: vec![u64::MAX; txs],
        propose_pending: vec![false; n as usize],
        trace: Trace::new(sink),
        observer,
        global_commits: HashMap::new(),
        metrics: SimMetrics {
            txs_generated: txs as u64,
            tainted_generated: workload.txs.iter().filter(|t| t.tainted).count() as u64,
            pipeline_bracket: [
                lat.validation[0] + lat.consensus_vote[0] + lat.append[0],
                lat.validation[1] + lat.consensus_vote[1] + lat.append[1],
            ],
            end_to_end_bracket: [
                lat.validation[0] + lat.consensus_vote[0] + lat.append[0] + cfg.confirmation_window_ms[0],
                lat.validation[1] + lat.consensus_vote[1] + lat.append[1] + cfg.confirmation_window_ms[1],
            ],
            ..Default::default()
        },
        lifecycles: workload.txs.iter().map(|t| TxLifecycle::initiated(t.created_at)).collect(),
        heights: vec![None; txs],
        verdicts: vec![None; txs],
        pipeline: Vec::with_capacity(txs),
        end_to_end: Vec::with_capacity(txs),
        first_created: workload.txs.first().map(|t| t.created_at),
        last_append: 0,
        disputes: DisputeLog::default(),
        open_disputes: HashMap::new(),
        fatal: None,
    };
    sim.start();
    sim.run_loop();
    sim.finish(initial_total, workload)
}

impl Sim<'_> {
    fn schedule(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued { t, seq: self.seq, ev });
    }

    fn sample(&mut self, stage: Stage) -> u64 {
        sample_latency(stage, &mut self.rng, self.cfg)
    }

    fn start(&mut self) {
        self.trace.record(
            0,
            Event::RunStarted {
                seed: self.cfg.seed,
                validators: self.cfg.validators,
                txs: self.ctx.workload.txs.len() as u64,
                initial_total: Wide(self.nodes[0].state.total()),
            },
        );
        for f in &self.cfg.faults {
            match &f.behavior {
                Behavior::Crash { at_ms } => self.schedule(*at_ms, Ev::Crash(f.validator)),
                Behavior::Partition { from_ms, to_ms } => {
                    self.schedule(*from_ms, Ev::PartitionStart(f.validator, f.behavior.clone()));
                    self.schedule(*to_ms, Ev::Heal(f.validator));
                }
                b => self.trace.record(
                    0,
                    Event::FaultActivated {
                        node: f.validator,
                        behavior: b.clone(),
                    },
                ),
            }
        }
        if let Some(t) = self.ctx.workload.txs.first().map(|t| t.created_at) {
            self.schedule(t, Ev::Arrive(0));
        }
    }

    fn run_loop(&mut self) {
        while let Some(q) = self.queue.pop() {
            if q.t > self.horizon || self.fatal.is_some() {
                break;
            }
            self.now = q.t;
            match q.ev {
                Ev::Arrive(i) => self.on_arrive(i),
                Ev::Ready(i) => self.on_ready(i),
                Ev::Propose(v) => {
                    self.propose_pending[v as usize] = false;
                    self.on_propose(v);
                }
                Ev::Deliver(to, env) => self.on_deliver(to, &env),
                Ev::Append(v) => {
                    self.nodes[v as usize].append_wakeup = None;
                    self.try_append(v);
                }
                Ev::Tick(v) => self.on_tick(v),
                Ev::Crash(v) => {
                    self.nodes[v as usize].crashed = true;
                    self.trace.record(self.now, Event::Crashed { node: v });
                }
                Ev::PartitionStart(v, b) => {
                    self.trace.record(self.now, Event::FaultActivated { node: v, behavior: b });
                }
                Ev::Heal(v) => self.on_heal(v),
                Ev::Final(i) => self.on_final(i),
            }
        }
    }

    fn on_arrive(&mut self, i: u32) {
        let w = &self.ctx.workload.txs[i as usize];
        let (id, created) = (w.id, w.created_at);
        self.trace.record(self.now, Event::TxInitiated { tx: id });
        let lv = self.sample(Stage::Validation);
        self.schedule(created + lv, Ev::Ready(i));
        if let Some(next) = self.ctx.workload.txs.get(i as usize + 1) {
            let t = next.created_at;
            self.schedule(t, Ev::Arrive(i + 1));
        }
    }

    fn on_ready(&mut self, i: u32) {
        let now = self.now;
        self.ready_at[i as usize] = now;
        let id = self.ctx.workload.txs[i as usize].id;
        self.trace.record(now, Event::TxReady { tx: id });
        for v in 0..self.nodes.len() {
            let node = &mut self.nodes[v];
            if !node.live_at(now) {
                continue;
            }
            node.pool.insert((now, i));
            if node.cs.is_leader() {
                node.proposable.insert((now, i));
                self.wake_proposer(v as u16);
            }
            self.arm_tick(v as u16);
        }
    }

    fn wake_proposer(&mut self, v: u16) {
        if !self.propose_pending[v as usize] {
            self.propose_pending[v as usize] = true;
            self.schedule(self.now, Ev::Propose(v));
        }
    }

    fn arm_tick(&mut self, v: u16) {
        let node = &mut self.nodes[v as usize];
        if !node.tick_armed {
            node.tick_armed = true;
            let t = self.now + self.tick_ms;
            self.schedule(t, Ev::Tick(v));
        }
    }

    fn open_round(&mut self, view: u64, height: u64) {
        let lc = self.sample(Stage::ConsensusVote);
        let la = self.sample(Stage::Append);
        let now = self.now;
        let mut phase = [now + lc / 3, now + 2 * lc / 3, now + lc];
        for (p, last) in phase.iter_mut().zip(self.last_phase.iter_mut()) {
            *p = (*p).max(*last);
            *last = *p;
        }
        self.rounds.insert((view, height), Round { phase, append: la });
    }

    fn on_propose(&mut self, v: u16) {
        let now = self.now;
        let max = self.cfg.max_block_txs;
        let node = &self.nodes[v as usize];
        if !node.live_at(now) || !node.cs.is_leader() || node.role.silent {
            return;
        }
        let view = node.cs.view();
        if node.role.garbage {
            if node.garbage_sent_view != Some(view) {
                let h = node.chain.tip_height() + 1;
                let d = self.random_digest();
                self.nodes[v as usize].garbage_sent_view = Some(view);
                let m = self.keyring.sign(MsgKind::PrePrepare, view, h, d, v);
                self.open_round(view, h);
                self.send(v, vec![m], Vec::new());
            }
            return;
        }
        loop {
            let node = &self.nodes[v as usize];
            if node.proposable.is_empty() {
                break;
            }
            let (ph, pd, pstate, pts) = node.proposal_parent();
            let ts = now.max(pts);
            let batch: Vec<(u64, u32)> = node.proposable.iter().take(max).copied().collect();
            let idx: Vec<u32> = batch.iter().map(|&(_, i)| i).collect();
            let Some(out) = self.ctx.execute(&pstate, &idx, ts) else {
                break;
            };
            let block = Arc::new(Block::assemble(ph + 1, ts, pd, out.records));
            let step = match self.nodes[v as usize].cs.propose(&block) {
                Ok(s) => s,
                Err(_) => break,
            };
            let digest = block.digest();
            let node = &mut self.nodes[v as usize];
            for b in &batch {
                node.proposable.remove(b);
            }
            node.insert_candidate(Candidate {
                block: block.clone(),
                digest,
                txs: idx.clone(),
                state: Arc::new(out.state),
                deltas: Arc::new(out.deltas),
            });
            node.proposal_tip = Some((ph + 1, digest));
            self.open_round(view, ph + 1);
            self.trace.record(
                now,
                Event::Proposed {
                    node: v,
                    view,
                    height: ph + 1,
                    digest,
                    txs: idx.len() as u32,
                },
            );
            if self.nodes[v as usize].role.equivocate {
                self.equivocate(v, &block, &pstate, &idx, step);
            } else {
                self.dispatch(v, step);
            }
        }
    }

    /// Sends the real block to even-indexed peers and a conflicting one,
    /// stamped a millisecond later, to odd-indexed peers.
    fn equivocate(&mut self, v: u16, a: &Arc<Block>, parent: &LedgerState, idx: &[u32], mut step: Step) {
        let h = a.header;
        let Some(out) = self.ctx.execute(parent, idx, h.timestamp_ms + 1) else {
            return self.dispatch(v, step);
        };
        let b = Arc::new(Block::assemble(h.height, h.timestamp_ms + 1, h.prev_hash, out.records));
        let view = self.nodes[v as usize].cs.view();
        let pa = self.keyring.sign(MsgKind::PrePrepare, view, h.height, a.digest(), v);
        let pb = self.keyring.sign(MsgKind::PrePrepare, view, h.height, b.digest(), v);
        step.outbound.retain(|m| m.kind != MsgKind::PrePrepare);
        self.trace.record(
            self.now,
            Event::Equivocated {
                node: v,
                view,
                height: h.height,
                even: a.digest(),
                odd: b.digest(),
            },
        );
        for (m, blk) in [(pa, a), (pb, &b)] {
            self.trace.record(
                self.now,
                Event::Sent {
                    from: v,
                    kind: m.kind,
                    view,
                    height: m.height,
                    digest: m.block_digest,
                },
            );
            let t = self.deliver_at(&m, 0);
            let even = m.block_digest == a.digest();
            let env = Arc::new(Envelope {
                from: v,
                msgs: vec![m],
                payloads: vec![blk.clone()],
            });
            for peer in 0..self.nodes.len() as u16 {
                if peer != v && (peer % 2 == 0) == even {
                    self.metrics.messages_sent += 1;
                    self.schedule(t, Ev::Deliver(peer, env.clone()));
                }
            }
        }
        self.dispatch(v, step);
    }

    fn random_digest(&mut self) -> Digest {
        let mut d = [0u8; 32];
        d[..16].copy_from_slice(&self.garbage_rng.bytes16());
        d[16..].copy_from_slice(&self.garbage_rng.bytes16());
        Digest(d)
    }

    fn deliver_at(&self, m: &ConsensusMessage, vc_hop: u64) -> u64 {
        let phase = match m.kind {
            MsgKind::PrePrepare => 0,
            MsgKind::Prepare => 1,
            MsgKind::Commit => 2,
            MsgKind::ViewChange => return self.now + vc_hop,
        };
        match self.rounds.get(&(m.view, m.height)) {
            Some(r) => r.phase[phase].max(self.now),
            None => self.now + self.cfg.latency.consensus_vote[0] / 3,
        }
    }

    /// Applies a consensus step taken by node `v`: outbound messages,
    /// commits, then view entry.
    fn dispatch(&mut self, v: u16, step: Step) {
        let Step {
            outbound,
            committed,
            entered_view,
        } = step;
        if !outbound.is_empty() {
            self.send_step(v, outbound);
        }
        for (h, d) in committed {
            self.on_commit(v, h, d);
        }
        if let Some(view) = entered_view {
            self.trace.record(self.now, Event::ViewEntered { node: v, view });
            self.on_view_entered(v);
        }
    }

    fn send_step(&mut self, v: u16, outbound: Vec<ConsensusMessage>) {
        let role = self.nodes[v as usize].role;
        if role.silent {
            return;
        }
        let vc_hop = if outbound.iter().any(|m| m.kind == MsgKind::ViewChange) {
            self.sample(Stage::ConsensusVote) / 3
        } else {
            0
        };
        let mut groups: BTreeMap<u64, (Vec<ConsensusMessage>, Vec<Arc<Block>>)> = BTreeMap::new();
        for mut m in outbound {
            if role.garbage {
                let d = self.random_digest();
                m = self.keyring.sign(m.kind, m.view, m.height, d, v);
            }
            let t = self.deliver_at(&m, vc_hop);
            let g = groups.entry(t).or_default();
            if !role.garbage && m.block_digest != Digest::ZERO {
                let node = &self.nodes[v as usize];
                let attach = match m.kind {
                    MsgKind::PrePrepare | MsgKind::Commit => true,
                    MsgKind::ViewChange => m.height > node.chain.tip_height(),
                    MsgKind::Prepare => false,
                };
                if attach {
                    if let Some(b) = node.payload(m.height, &m.block_digest) {
                        g.1.push(b);
                    }
                }
            }
            g.0.push(m);
        }
        for (t, (msgs, payloads)) in groups {
            self.send_at(v, t, msgs, payloads);
        }
    }

    fn send(&mut self, v: u16, msgs: Vec<ConsensusMessage>, payloads: Vec<Arc<Block>>) {
        let t = msgs.first().map(|m| self.deliver_at(m, 0)).unwrap_or(self.now);
        self.send_at(v, t, msgs, payloads);
    }

    fn send_at(&mut self, v: u16, t: u64, msgs: Vec<ConsensusMessage>, payloads: Vec<Arc<Block>>) {
        for m in &msgs {
            self.trace.record(
                self.now,
                Event::Sent {
                    from: v,
                    kind: m.kind,
                    view: m.view,
                    height: m.height,
                    digest: m.block_digest,
                },
            );
        }
        let count = msgs.len() as u64;
        let env = Arc::new(Envelope {
            from: v,
            msgs,
            payloads,
        });
        for peer in 0..self.nodes.len() as u16 {
            if peer != v {
                self.metrics.messages_sent += count;
                self.schedule(t, Ev::Deliver(peer, env.clone()));
            }
        }
    }

    fn on_deliver(&mut self, to: u16, env: &Envelope) {
        let now = self.now;
        if self.nodes[to as usize].crashed {
            return;
        }
        if !self.nodes[to as usize].live_at(now) || self.nodes[env.from as usize].partitioned_at(now) {
            self.metrics.messages_dropped += env.msgs.len() as u64;
            return;
        }
        for p in &env.payloads {
            self.nodes[to as usize].remember(p.clone());
        }
        for m in &env.msgs {
            if m.kind == MsgKind::PrePrepare && !self.check_proposal(to, m) {
                continue;
            }
            let step = self.nodes[to as usize].cs.handle_message(m, now);
            self.dispatch(to, step);
            if self.nodes[to as usize].crashed {
                return;
            }
        }
    }

    /// Payload check for a pre-prepare. Messages the consensus layer will
    /// reject anyway are passed through so they are counted there.
    fn check_proposal(&mut self, to: u16, m: &ConsensusMessage) -> bool {
        let node = &self.nodes[to as usize];
        if !self.keyring.verify(m)
            || m.sender != node.cs.leader_of(m.view)
            || m.view < node.cs.view()
            || node.cs.is_final(m.height)
        {
            return true;
        }
        let ok = match node.payload(m.height, &m.block_digest) {
            None => false,
            Some(b) => {
                let node = &mut self.nodes[to as usize];
                node.check_block(&b, self.now, &self.ready_at, &self.ctx).is_ok()
            }
        };
        if !ok {
            self.metrics.invalid_proposals += 1;
            self.trace.record(
                self.now,
                Event::InvalidProposal {
                    node: to,
                    from: m.sender,
                    height: m.height,
                    digest: m.block_digest,
                },
            );
        }
        ok
    }

    fn on_commit(&mut self, v: u16, h: u64, d: Digest) {
        let now = self.now;
        let view = self.nodes[v as usize].cs.view();
        if !self.nodes[v as usize].role.byzantine() {
            match self.global_commits.get(&h) {
                Some(&other) if other != d => {
                    self.metrics.conflicting_commits += 1;
                    self.trace.record(
                        now,
                        Event::ConflictingCommit {
                            node: v,
                            height: h,
                            digest: d,
                            other,
                        },
                    );
                }
                Some(_) => {}
                None => {
                    self.global_commits.insert(h, d);
                }
            }
        }
        self.trace.record(
            now,
            Event::Committed {
                node: v,
                view,
                height: h,
                digest: d,
            },
        );
        let la = self
            .rounds
            .get(&(view, h))
            .map(|r| r.append)
            .unwrap_or(self.cfg.latency.append[0]);
        let node = &mut self.nodes[v as usize];
        if h > node.chain.tip_height() {
            node.to_append.insert(
                h,
                PendingAppend {
                    digest: d,
                    committed_at: now,
                    due: now + la,
                },
            );
        }
        self.try_append(v);
    }

    fn try_append(&mut self, v: u16) {
        let now = self.now;
        loop {
            let node = &mut self.nodes[v as usize];
            if node.crashed {
                return;
            }
            let next = node.chain.tip_height() + 1;
            let Some(p) = node.to_append.get(&next).copied() else {
                return;
            };
            let due = p.due.max(node.last_append_at);
            if due > now {
                if node.append_wakeup.is_none_or(|w| w > due) {
                    node.append_wakeup = Some(due);
                    self.schedule(due, Ev::Append(v));
                }
                return;
            }
            let cand = match node.candidate(next, &p.digest) {
                Some(c) => c.clone(),
                None => {
                    let Some(b) = node.payload(next, &p.digest) else {
                        return;
                    };
                    match node.check_block(&b, now, &self.ready_at, &self.ctx) {
                        Ok(c) => c,
                        Err(e) => {
                            self.fatal = Some(format!(
                                "node {v} cannot re-execute committed block {next}: {e:?}"
                            ));
                            return;
                        }
                    }
                }
            };
            if let Err(e) = node.chain.push_block(&cand.block) {
                self.fatal = Some(format!("node {v} append {next}: {e}"));
                return;
            }
            node.state = cand.state.clone();
            node.last_append_at = now;
            node.to_append.remove(&next);
            for &i in &cand.txs {
                let key = (self.ready_at[i as usize], i);
                node.pool.remove(&key);
                node.proposable.remove(&key);
            }
            node.prune();
            self.trace.record(
                now,
                Event::Appended {
                    node: v,
                    height: next,
                    digest: cand.digest,
                    deltas: cand.deltas.balances.iter().map(|(k, x)| (k.clone(), Wide(*x))).collect(),
                    fee_pool: Wide(cand.deltas.fee_pool),
                    withholding_pool: Wide(cand.deltas.withholding_pool),
                },
            );
            if v == self.observer {
                self.observe_append(&cand, p.committed_at);
            }
        }
    }

    fn observe_append(&mut self, cand: &Candidate, committed_at: u64) {
        let now = self.now;
        let ts = cand.block.header.timestamp_ms;
        let height = cand.block.header.height;
        self.last_append = now;
        self.metrics.blocks += 1;
        let bp = self.cfg.compliance.oracle_dispute_bp as u64;
        for (rec, &i) in cand.block.txs.iter().zip(&cand.txs) {
            let iu = i as usize;
            self.trace.record(
                now,
                Event::TxSettled {
                    tx: rec.tx_id,
                    height,
                    status: rec.status,
                    verdict: rec.compliance_verdict,
                    fee: rec.fee,
                    withholding: rec.withholding,
                },
            );
            self.heights[iu] = Some(height);
            self.verdicts[iu] = Some(rec.compliance_verdict);
            if rec.status != TxStatus::Appended {
                self.metrics.txs_rejected += 1;
                let reason = match rec.compliance_verdict {
                    ComplianceVerdict::Rejected(r) => format!("{r:?}"),
                    other => format!("{other:?}"),
                };
                *self.metrics.rejections.entry(reason).or_default() += 1;
                continue;
            }
            self.metrics.txs_executed += 1;
            if self.ctx.workload.txs[iu].tainted {
                self.metrics.tainted_executed += 1;
            }
            let lc = &mut self.lifecycles[iu];
            let steps = [
                (LifecycleEvent::Validate, ts),
                (LifecycleEvent::Execute, ts),
                (LifecycleEvent::Approve, committed_at),
                (LifecycleEvent::Append, now),
            ];
            for (ev, t) in steps {
                if let Err(e) = advance_status(lc, ev, t) {
                    self.fatal = Some(format!("tx {}: {e}", rec.tx_id));
                    return;
                }
            }
            let created = self.ctx.workload.txs[iu].created_at;
            let pipe = now - created;
            self.pipeline.push(pipe);
            let [lo, hi] = self.metrics.pipeline_bracket;
            if pipe < lo || pipe > hi {
                self.metrics.pipeline_out_of_bracket += 1;
            }
            let conf = self.sample(Stage::Confirmation);
            self.schedule(now + conf, Ev::Final(i));
            if bp > 0 && self.dispute_rng.uniform_inclusive(0, 9_999) < bp {
                let raised_by = rec.receiver.clone();
                if let Ok(d) = self
                    .disputes
                    .open_dispute(rec.tx_id, raised_by.clone(), DisputeReason::OracleData, now, |_| true)
                {
                    self.metrics.disputes_opened += 1;
                    self.open_disputes.insert(i, d.dispute_id);
                    self.trace.record(
                        now,
                        Event::DisputeOpened {
                            dispute_id: d.dispute_id,
                            tx: rec.tx_id,
                            reason: DisputeReason::OracleData,
                            raised_by,
                        },
                    );
                }
            }
        }
    }

    fn on_final(&mut self, i: u32) {
        let now = self.now;
        let iu = i as usize;
        if let Err(e) = advance_status(&mut self.lifecycles[iu], LifecycleEvent::Finalize, now) {
            self.fatal = Some(format!("finalize {i}: {e}"));
            return;
        }
        let w = &self.ctx.workload.txs[iu];
        let (id, created) = (w.id, w.created_at);
        self.trace.record(now, Event::TxFinal { tx: id });
        let e2e = now - created;
        self.end_to_end.push(e2e);
        let [lo, hi] = self.metrics.end_to_end_bracket;
        if e2e < lo || e2e > hi {
            self.metrics.end_to_end_out_of_bracket += 1;
        }
        if let Some(d) = self.open_disputes.remove(&i) {
            if self.disputes.resolve_dispute(d, Resolution::Dismissed, now).is_ok() {
                self.metrics.disputes_resolved += 1;
                self.trace.record(
                    now,
                    Event::DisputeResolved {
                        dispute_id: d,
                        resolution: Resolution::Dismissed,
                    },
                );
            }
        }
    }

    fn on_tick(&mut self, v: u16) {
        let now = self.now;
        let node = &mut self.nodes[v as usize];
        node.tick_armed = false;
        if node.crashed || node.pool.is_empty() {
            return;
        }
        let oldest = node.pool.first().map(|&(t, _)| t);
        let step = node.cs.on_timeout(now, oldest);
        self.dispatch(v, step);
        if now + self.tick_ms <= self.horizon {
            self.arm_tick(v);
        }
    }

    fn on_view_entered(&mut self, v: u16) {
        let node = &mut self.nodes[v as usize];
        node.proposal_tip = None;
        node.proposable.clear();
        node.garbage_sent_view = None;
        if !node.cs.is_leader() || node.crashed {
            return;
        }
        if node.role.silent {
            return;
        }
        if !node.role.garbage {
            self.repropose(v);
        }
        let node = &mut self.nodes[v as usize];
        let busy = node.in_flight();
        node.proposable = node.pool.iter().filter(|(_, i)| !busy.contains(i)).copied().collect();
        self.wake_proposer(v);
    }

    /// New-view leader: re-announce what the view-change reports say may be
    /// missing elsewhere, then re-propose the best-supported uncommitted
    /// blocks, stopping at the first height with nothing usable.
    fn repropose(&mut self, v: u16) {
        let now = self.now;
        let view = self.nodes[v as usize].cs.view();
        let reports = self.nodes[v as usize].cs.view_change_reports(view);
        let base = self.nodes[v as usize].chain.tip_height();
        let start = reports.keys().next().copied().unwrap_or(base + 1).clamp(1, base + 1);
        for h in start..=base {
            let Some(Ok(b)) = self.nodes[v as usize].chain.block(h) else {
                break;
            };
            let b = Arc::new(b);
            if let Ok(step) = self.nodes[v as usize].cs.propose(&b) {
                self.open_round(view, h);
                self.dispatch(v, step);
            }
        }
        let mut parent = self.nodes[v as usize].chain.head();
        let mut h = base + 1;
        loop {
            let node = &self.nodes[v as usize];
            let choices: Vec<Digest> = match node.cs.commit_log().get(&h) {
                Some(d) => vec![*d],
                None => reports.get(&h).map(|r| r.iter().map(|x| x.0).collect()).unwrap_or_default(),
            };
            let mut picked = None;
            for d in choices {
                let Some(b) = self.nodes[v as usize].payload(h, &d) else {
                    continue;
                };
                if b.header.prev_hash != parent {
                    continue;
                }
                let node = &mut self.nodes[v as usize];
                if node.check_block(&b, now, &self.ready_at, &self.ctx).is_ok() {
                    picked = Some((b, d));
                    break;
                }
            }
            let Some((b, d)) = picked else { break };
            let Ok(step) = self.nodes[v as usize].cs.propose(&b) else {
                break;
            };
            self.open_round(view, h);
            self.trace.record(
                now,
                Event::Proposed {
                    node: v,
                    view,
                    height: h,
                    digest: d,
                    txs: b.txs.len() as u32,
                },
            );
            self.dispatch(v, step);
            self.nodes[v as usize].proposal_tip = Some((h, d));
            parent = d;
            h += 1;
        }
        let node = &mut self.nodes[v as usize];
        if matches!(node.proposal_tip, Some((ph, _)) if ph <= node.chain.tip_height()) {
            node.proposal_tip = None;
        }
    }

    /// State transfer for a node rejoining after a partition: copy the
    /// lowest-indexed live, non-byzantine peer.
    fn on_heal(&mut self, v: u16) {
        let now = self.now;
        self.trace.record(now, Event::PartitionHealed { node: v });
        if self.nodes[v as usize].crashed {
            return;
        }
        let Some(src) = (0..self.nodes.len() as u16).find(|&j| {
            let n = &self.nodes[j as usize];
            j != v && !n.role.byzantine() && n.live_at(now)
        }) else {
            return;
        };
        let s = self.nodes[src as usize].clone();
        let node = &mut self.nodes[v as usize];
        node.chain = s.chain;
        node.state = s.state;
        node.pool = s.pool;
        node.candidates = s.candidates;
        node.known = s.known;
        node.to_append = s.to_append;
        node.last_append_at = s.last_append_at;
        node.proposal_tip = None;
        node.proposable.clear();
        node.cs.sync_from(s.cs.view(), s.cs.commit_log(), now);
        let height = node.chain.tip_height();
        self.trace.record(now, Event::Synced { node: v, from: src, height });
        if self.nodes[v as usize].cs.is_leader() {
            self.on_view_entered(v);
        }
        if !self.nodes[v as usize].pool.is_empty() {
            self.arm_tick(v);
        }
        self.try_append(v);
    }

    fn finish(mut self, initial_total: i128, workload: Arc<Workload>) -> Result<RunOutput, SimError> {
        if let Some(f) = self.fatal.take() {
            return Err(SimError::Invariant(f));
        }
        let end = self.now;
        for f in &self.cfg.faults {
            if let Behavior::TamperAttempt { height, byte_offset } = f.behavior {
                let node = &mut self.nodes[f.validator as usize];
                if node.chain.flip_byte(height, byte_offset, 0x01).is_ok() {
                    self.metrics.tamper_applied += 1;
                    self.trace.record(
                        end,
                        Event::TamperApplied {
                            node: f.validator,
                            height,
                            byte_offset,
                        },
                    );
                }
            }
        }
        let reports: Vec<NodeReport> = self
            .nodes
            .iter()
            .map(|n| NodeReport {
                index: n.idx,
                byzantine: n.role.byzantine(),
                faulty: !self.cfg.behavior_of(n.idx).is_empty(),
                crashed: n.crashed,
                view: n.cs.view(),
                verdict: verify_chain(&n.chain),
                state_digest: state_digest(&n.state),
                state: (*n.state).clone(),
                chain: n.chain.clone(),
                commit_log: n.cs.commit_log().clone(),
            })
            .collect();
        let snaps: Vec<NodeSnapshot<'_>> = reports
            .iter()
            .map(|r| NodeSnapshot {
                index: r.index,
                chain: &r.chain,
                state_digest: r.state_digest,
                verdict: r.verdict,
            })
            .collect();
        let reconcile = reconcile_nodes(&snaps);
        let m = &mut self.metrics;
        m.virtual_end_ms = end;
        m.final_view = reports.iter().filter(|r| !r.byzantine).map(|r| r.view).max().unwrap_or(0);
        m.txs_unsettled = m.txs_generated - m.txs_executed - m.txs_rejected;
        for n in &self.nodes {
            m.bad_auth += n.cs.stats.bad_auth;
            m.duplicates += n.cs.stats.duplicate;
        }
        m.pipeline_ms = LatencySummary::from_samples(std::mem::take(&mut self.pipeline));
        m.end_to_end_ms = LatencySummary::from_samples(std::mem::take(&mut self.end_to_end));
        if let Some(first) = self.first_created {
            let span = self.last_append.saturating_sub(first);
            if span > 0 {
                m.throughput_tps = (m.txs_executed + m.txs_rejected) as f64 * 1_000.0 / span as f64;
            }
        }
        let events = self.trace.len() + 1;
        self.trace.record(end, Event::RunEnded { events });
        let trace = self.trace.finish()?;
        let outcomes = workload
            .txs
            .iter()
            .zip(self.lifecycles)
            .enumerate()
            .map(|(i, (w, lifecycle))| TxOutcome {
                tx: w.id,
                tainted: w.tainted,
                height: self.heights[i],
                verdict: self.verdicts[i],
                lifecycle,
            })
            .collect();
        Ok(RunOutput {
            seed: self.cfg.seed,
            observer: self.observer,
            initial_total,
            trace,
            metrics: self.metrics,
            nodes: reports,
            outcomes,
            disputes: self.disputes,
            reconcile,
            workload,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{OperatorId, RejectReason};
    use crate::simnet::config::FaultSpec;
    use crate::simnet::trace::TraceEntry;

    fn cfg(seed: u64, duration_ms: u64) -> SimConfig {
        let mut c = SimConfig::default();
        c.seed = seed;
        c.workload.duration_ms = duration_ms;
        c
    }

    fn fault(validator: u16, behavior: Behavior) -> FaultSpec {
        FaultSpec { validator, behavior }
    }

    fn honest_agree(out: &RunOutput) {
        let honest: Vec<&NodeReport> = out.nodes.iter().filter(|n| !n.faulty).collect();
        for n in &honest {
            assert!(n.verdict.valid, "node {} chain invalid", n.index);
            assert_eq!(n.chain.head(), honest[0].chain.head(), "node {} head", n.index);
            assert_eq!(n.state_digest, honest[0].state_digest);
            assert_eq!(n.state.total(), out.initial_total);
        }
        assert_eq!(out.metrics.conflicting_commits, 0);
    }

    #[test]
    fn honest_run_settles_everything() {
        let out = run_simulation(&cfg(1, 300), TraceSink::DigestOnly).unwrap();
        let m = &out.metrics;
        assert!(m.txs_generated > 5_000, "{}", m.txs_generated);
        assert_eq!(m.txs_unsettled, 0);
        assert_eq!(m.txs_executed, m.txs_generated);
        assert_eq!(m.pipeline_out_of_bracket, 0);
        assert_eq!(m.end_to_end_out_of_bracket, 0);
        assert_eq!(m.pipeline_bracket, [650, 1_300]);
        assert_eq!(m.end_to_end_bracket, [57_650, 180_000]);
        assert_eq!(m.final_view, 0);
        assert!(out.reconcile.is_clean(), "{:?}", out.reconcile);
        honest_agree(&out);
        for o in &out.outcomes {
            assert_eq!(o.lifecycle.status, TxStatus::Final);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run_simulation(&cfg(9, 100), TraceSink::DigestOnly).unwrap();
        let b = run_simulation(&cfg(9, 100), TraceSink::DigestOnly).unwrap();
        let c = run_simulation(&cfg(10, 100), TraceSink::DigestOnly).unwrap();
        assert_eq!(a.trace.digest, b.trace.digest);
        assert_eq!(a.trace.len, b.trace.len);
        assert_ne!(a.trace.digest, c.trace.digest);
    }

    #[test]
    fn crashed_leader_is_replaced() {
        let mut c = cfg(2, 3_000);
        c.faults = vec![fault(0, Behavior::Crash { at_ms: 1_000 })];
        let out = run_simulation(&c, TraceSink::DigestOnly).unwrap();
        assert!(out.metrics.final_view >= 1);
        assert_eq!(out.metrics.txs_unsettled, 0);
        assert!(out.reconcile.mismatches.iter().all(|m| m.node == 0));
        honest_agree(&out);
    }

    #[test]
    fn byzantine_leaders_do_not_split_the_chain() {
        for b in [
            Behavior::ByzantineEquivocate,
            Behavior::ByzantineSilence,
            Behavior::ByzantineGarbage,
        ] {
            for n in [4u16, 7] {
                let mut c = cfg(3, 1_500);
                c.validators = n;
                c.faults = vec![fault(0, b.clone())];
                let out = run_simulation(&c, TraceSink::DigestOnly).unwrap();
                assert_eq!(out.metrics.txs_unsettled, 0, "{b:?} n={n}");
                assert!(out.metrics.final_view >= 1, "{b:?} n={n}");
                honest_agree(&out);
            }
        }
    }

    #[test]
    fn partitioned_node_catches_up() {
        let mut c = cfg(4, 3_000);
        c.faults = vec![fault(2, Behavior::Partition { from_ms: 500, to_ms: 2_000 })];
        let out = run_simulation(&c, TraceSink::DigestOnly).unwrap();
        assert!(out.metrics.messages_dropped > 0);
        assert!(out.reconcile.is_clean(), "{:?}", out.reconcile);
        honest_agree(&out);
    }

    #[test]
    fn tampered_copy_is_flagged() {
        let mut c = cfg(5, 200);
        c.faults = vec![fault(1, Behavior::TamperAttempt { height: 3, byte_offset: 120 })];
        let out = run_simulation(&c, TraceSink::DigestOnly).unwrap();
        assert_eq!(out.metrics.tamper_applied, 1);
        let bad = &out.nodes[1];
        assert!(!bad.verdict.valid);
        assert_eq!(out.reconcile.mismatches.len(), 1);
        assert_eq!(out.reconcile.mismatches[0].node, 1);
        assert_eq!(out.reconcile.mismatches[0].height, 3);
    }

    #[test]
    fn sanctioned_flows_never_execute() {
        let mut c = cfg(6, 300);
        c.compliance.sanctions = vec![OperatorId::new("OP07").unwrap()];
        c.workload.tainted_share_bp = 1_000;
        let out = run_simulation(&c, TraceSink::DigestOnly).unwrap();
        let m = &out.metrics;
        assert!(m.tainted_generated > 0);
        assert_eq!(m.tainted_executed, 0);
        assert_eq!(m.rejections[&format!("{:?}", RejectReason::Sanctioned)], m.tainted_generated);
        for o in out.outcomes.iter().filter(|o| o.tainted) {
            assert_eq!(o.verdict, Some(ComplianceVerdict::Rejected(RejectReason::Sanctioned)));
            assert_eq!(o.lifecycle.status, TxStatus::Initiated);
        }
    }

    #[test]
    fn trace_replay_reproduces_state() {
        let mut c = cfg(7, 200);
        c.compliance.oracle_dispute_bp = 100;
        let out = run_simulation(&c, TraceSink::Memory(Vec::new())).unwrap();
        let events: Vec<TraceEntry> = out.trace.events.clone().unwrap();
        assert_eq!(events.len() as u64, out.trace.len);
        let mut balances: Vec<BTreeMap<OperatorId, i128>> = vec![BTreeMap::new(); c.validators as usize];
        let mut pools = vec![(0i128, 0i128); c.validators as usize];
        for e in &events {
            if let Event::Appended {
                node,
                deltas,
                fee_pool,
                withholding_pool,
                ..
            } = &e.event
            {
                let sum: i128 = deltas.iter().map(|d| d.1 .0).sum::<i128>() + fee_pool.0 + withholding_pool.0;
                assert_eq!(sum, 0);
                for (op, d) in deltas {
                    *balances[*node as usize].entry(op.clone()).or_default() += d.0;
                }
                pools[*node as usize].0 += fee_pool.0;
                pools[*node as usize].1 += withholding_pool.0;
            }
        }
        for n in &out.nodes {
            let i = n.index as usize;
            for (op, b) in &n.state.balances {
                let start = c.workload.initial_balance as i128;
                assert_eq!(*b, start + balances[i].get(op).copied().unwrap_or(0));
            }
            assert_eq!((n.state.fee_pool, n.state.withholding_pool), pools[i]);
        }
        assert!(out.metrics.disputes_opened > 0);
        assert_eq!(out.metrics.disputes_opened, out.metrics.disputes_resolved);
        assert!(out.disputes.verify().is_ok());
        assert!(matches!(events.last().unwrap().event, Event::RunEnded { .. }));
    }
}
