use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::TxStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleEvent {
    Validate,
    Execute,
    Approve,
    Append,
    Finalize,
}

impl LifecycleEvent {
    pub fn target(self) -> TxStatus {
        match self {
            LifecycleEvent::Validate => TxStatus::Validated,
            LifecycleEvent::Execute => TxStatus::Executed,
            LifecycleEvent::Approve => TxStatus::ConsensusApproved,
            LifecycleEvent::Append => TxStatus::Appended,
            LifecycleEvent::Finalize => TxStatus::Final,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LifecycleError {
    #[error("cannot move from {from:?} to {to:?}")]
    OutOfOrderTransition { from: TxStatus, to: TxStatus },
    #[error("stage time {now} precedes previous stage time {prev}")]
    TimeWentBackwards { prev: u64, now: u64 },
}

/// Current stage of a transaction plus the virtual time each stage was
/// reached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxLifecycle {
    pub status: TxStatus,
    pub stamps: [Option<u64>; 6],
}

impl TxLifecycle {
    pub fn initiated(now: u64) -> Self {
        let mut stamps = [None; 6];
        stamps[0] = Some(now);
        TxLifecycle {
            status: TxStatus::Initiated,
            stamps,
        }
    }

    pub fn stamp(&self, s: TxStatus) -> Option<u64> {
        self.stamps[s as usize]
    }
}

pub fn advance_status(
    lc: &mut TxLifecycle,
    event: LifecycleEvent,
    now: u64,
) -> Result<TxStatus, LifecycleError> {
    let to = event.target();
    if lc.status.next() != Some(to) {
        return Err(LifecycleError::OutOfOrderTransition {
            from: lc.status,
            to,
        });
    }
    let prev = lc.stamps[lc.status as usize].unwrap_or(0);
    if now < prev {
        return Err(LifecycleError::TimeWentBackwards { prev, now });
    }
    lc.status = to;
    lc.stamps[to as usize] = Some(now);
    Ok(to)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let mut lc = TxLifecycle::initiated(0);
        assert_eq!(
            advance_status(&mut lc, LifecycleEvent::Validate, 5),
            Ok(TxStatus::Validated)
        );
    }

    #[test]
    fn skipping_is_rejected() {
        let mut lc = TxLifecycle::initiated(0);
        assert_eq!(
            advance_status(&mut lc, LifecycleEvent::Append, 5),
            Err(LifecycleError::OutOfOrderTransition {
                from: TxStatus::Initiated,
                to: TxStatus::Appended
            })
        );
        assert_eq!(lc.status, TxStatus::Initiated);
    }

    #[test]
    fn full_sequence_is_monotone() {
        use LifecycleEvent::*;
        let mut lc = TxLifecycle::initiated(10);
        for (ev, t) in [(Validate, 120), (Execute, 120), (Approve, 700), (Append, 760), (Finalize, 60_000)] {
            advance_status(&mut lc, ev, t).unwrap();
        }
        assert_eq!(lc.status, TxStatus::Final);
        let stamps: Vec<u64> = lc.stamps.iter().map(|s| s.unwrap()).collect();
        assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(
            advance_status(&mut lc, Finalize, 70_000),
            Err(LifecycleError::OutOfOrderTransition {
                from: TxStatus::Final,
                to: TxStatus::Final
            })
        );
    }

    #[test]
    fn time_cannot_go_backwards() {
        let mut lc = TxLifecycle::initiated(100);
        assert!(matches!(
            advance_status(&mut lc, LifecycleEvent::Validate, 99),
            Err(LifecycleError::TimeWentBackwards { .. })
        ));
    }
}
