//! Dispute tracking. Every open and every resolution is appended to a
//! hash-chained log so disputes share the audit trail's tamper evidence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Digest, OperatorId, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisputeReason {
    LedgerDiscrepancy = 0,
    FeeDisagreement = 1,
    OracleData = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Upheld = 0,
    Dismissed = 1,
    Adjusted = 2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dispute {
    pub dispute_id: u64,
    pub tx_id: TxId,
    pub raised_by: OperatorId,
    pub reason: DisputeReason,
    pub opened_at: u64,
    pub resolved_at: Option<u64>,
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisputeError {
    #[error("unknown transaction {0}")]
    UnknownTransaction(TxId),
    #[error("unknown dispute {0}")]
    UnknownDispute(u64),
    #[error("dispute {0} already resolved")]
    AlreadyResolved(u64),
    #[error("resolution time {now} precedes opening time {opened}")]
    ResolvedBeforeOpened { opened: u64, now: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeLogEntry {
    pub dispute: Dispute,
    pub digest: Digest,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeLog {
    disputes: Vec<Dispute>,
    entries: Vec<DisputeLogEntry>,
}

fn entry_bytes(d: &Dispute) -> Vec<u8> {
    let mut b = Vec::with_capacity(64);
    b.extend_from_slice(&d.dispute_id.to_le_bytes());
    b.extend_from_slice(&d.tx_id.0);
    b.extend_from_slice(&(d.raised_by.as_str().len() as u16).to_le_bytes());
    b.extend_from_slice(d.raised_by.as_str().as_bytes());
    b.push(d.reason as u8);
    b.extend_from_slice(&d.opened_at.to_le_bytes());
    match (d.resolved_at, d.resolution) {
        (Some(t), Some(r)) => {
            b.push(1);
            b.extend_from_slice(&t.to_le_bytes());
            b.push(r as u8);
        }
        _ => b.push(0),
    }
    b
}

impl DisputeLog {
    pub fn disputes(&self) -> &[Dispute] {
        &self.disputes
    }

    pub fn entries(&self) -> &[DisputeLogEntry] {
        &self.entries
    }

    pub fn count_by(&self, reason: DisputeReason) -> usize {
        self.disputes.iter().filter(|d| d.reason == reason).count()
    }

    fn record(&mut self, d: Dispute) {
        let prev = self.entries.last().map_or(Digest::ZERO, |e| e.digest);
        let digest = Digest::of_parts(&[prev.as_bytes(), &entry_bytes(&d)]);
        self.entries.push(DisputeLogEntry { dispute: d, digest });
    }

    /// Opens a dispute against a transaction for which `tx_known` holds.
    pub fn open_dispute(
        &mut self,
        tx_id: TxId,
        raised_by: OperatorId,
        reason: DisputeReason,
        now: u64,
        tx_known: impl Fn(&TxId) -> bool,
    ) -> Result<Dispute, DisputeError> {
        if !tx_known(&tx_id) {
            return Err(DisputeError::UnknownTransaction(tx_id));
        }
        let d = Dispute {
            dispute_id: self.disputes.len() as u64,
            tx_id,
            raised_by,
            reason,
            opened_at: now,
            resolved_at: None,
            resolution: None,
        };
        self.disputes.push(d.clone());
        self.record(d.clone());
        Ok(d)
    }

    pub fn resolve_dispute(
        &mut self,
        dispute_id: u64,
        resolution: Resolution,
        now: u64,
    ) -> Result<Dispute, DisputeError> {
        let d = self
            .disputes
            .get_mut(dispute_id as usize)
            .ok_or(DisputeError::UnknownDispute(dispute_id))?;
        if d.resolved_at.is_some() {
            return Err(DisputeError::AlreadyResolved(dispute_id));
        }
        if now < d.opened_at {
            return Err(DisputeError::ResolvedBeforeOpened {
                opened: d.opened_at,
                now,
            });
        }
        d.resolved_at = Some(now);
        d.resolution = Some(resolution);
        let d = d.clone();
        self.record(d.clone());
        Ok(d)
    }

    /// Recomputes the entry chain; returns the index of the first bad entry.
    pub fn verify(&self) -> Result<(), usize> {
        let mut prev = Digest::ZERO;
        for (i, e) in self.entries.iter().enumerate() {
            let expect = Digest::of_parts(&[prev.as_bytes(), &entry_bytes(&e.dispute)]);
            if expect != e.digest {
                return Err(i);
            }
            prev = e.digest;
        }
        Ok(())
    }
}
