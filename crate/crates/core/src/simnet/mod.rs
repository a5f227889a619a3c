//! Deterministic discrete-event simulation of a validator network running
//! the settlement ledger.

mod config;
mod exec;
mod node;
mod reconcile;
mod rng;
mod sim;
mod trace;
mod workload;

pub use config::{
    Behavior, ComplianceConfig, ConfigError, FaultSpec, LatencyConfig, SimConfig, Stage, WorkloadProfile,
};
pub use exec::{Deltas, ExecCtx, Executed};
pub use reconcile::{reconcile_nodes, Mismatch, MismatchKind, NodeSnapshot, ReconciliationReport};
pub use rng::SimRng;
pub use sim::{
    run_simulation, run_workload, LatencySummary, NodeReport, RunOutput, SimError, SimMetrics, TxOutcome, DRAIN_MS,
};
pub use trace::{Event, FinishedTrace, Trace, TraceEntry, TraceSink, Wide};
pub use workload::{generate_workload, peak_exponent, peak_rate_per_sec, rate_factor, sample_latency, WorkTx, Workload};
