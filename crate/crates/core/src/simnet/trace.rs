use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::config::Behavior;
use crate::consensus::MsgKind;
use crate::ledger::{ComplianceVerdict, Digest, OperatorId, TxId, TxStatus};
use crate::settlement::{DisputeReason, Resolution};

/// Signed amount written as a decimal string; JSON numbers cannot carry
/// the full i128 range through tagged enums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Wide(pub i128);

impl From<Wide> for String {
    fn from(w: Wide) -> String {
        w.0.to_string()
    }
}

impl TryFrom<String> for Wide {
    type Error = std::num::ParseIntError;
    fn try_from(s: String) -> Result<Wide, Self::Error> {
        s.parse().map(Wide)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        seed: u64,
        validators: u16,
        txs: u64,
        initial_total: Wide,
    },
    FaultActivated {
        node: u16,
        behavior: Behavior,
    },
    PartitionHealed {
        node: u16,
    },
    Crashed {
        node: u16,
    },
    TxInitiated {
        tx: TxId,
    },
    TxReady {
        tx: TxId,
    },
    Proposed {
        node: u16,
        view: u64,
        height: u64,
        digest: Digest,
        txs: u32,
    },
    Equivocated {
        node: u16,
        view: u64,
        height: u64,
        even: Digest,
        odd: Digest,
    },
    InvalidProposal {
        node: u16,
        from: u16,
        height: u64,
        digest: Digest,
    },
    Sent {
        from: u16,
        kind: MsgKind,
        view: u64,
        height: u64,
        digest: Digest,
    },
    ViewEntered {
        node: u16,
        view: u64,
    },
    Committed {
        node: u16,
        view: u64,
        height: u64,
        digest: Digest,
    },
    ConflictingCommit {
        node: u16,
        height: u64,
        digest: Digest,
        other: Digest,
    },
    /// A block joined `node`'s chain. The balance changes are listed so
    /// the trace alone is enough to replay every node's state.
    Appended {
        node: u16,
        height: u64,
        digest: Digest,
        deltas: Vec<(OperatorId, Wide)>,
        fee_pool: Wide,
        withholding_pool: Wide,
    },
    TxSettled {
        tx: TxId,
        height: u64,
        status: TxStatus,
        verdict: ComplianceVerdict,
        fee: u64,
        withholding: u64,
    },
    TxFinal {
        tx: TxId,
    },
    Synced {
        node: u16,
        from: u16,
        height: u64,
    },
    DisputeOpened {
        dispute_id: u64,
        tx: TxId,
        reason: DisputeReason,
        raised_by: OperatorId,
    },
    DisputeResolved {
        dispute_id: u64,
        resolution: Resolution,
    },
    TamperApplied {
        node: u16,
        height: u64,
        byte_offset: usize,
    },
    RunEnded {
        events: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Where serialized events go. The digest is computed in every mode.
pub enum TraceSink {
    DigestOnly,
    Memory(Vec<TraceEntry>),
    Writer(Box<dyn Write + Send>),
}

/// Totally ordered event log. Each event is serialized as one JSON line;
/// the trace digest is SHA-256 over the concatenated lines.
pub struct Trace {
    sink: TraceSink,
    hasher: Sha256,
    buf: Vec<u8>,
    count: u64,
    last_t: u64,
    io_error: Option<std::io::Error>,
}

impl Trace {
    pub fn new(sink: TraceSink) -> Trace {
        Trace {
            sink,
            hasher: Sha256::new(),
            buf: Vec::with_capacity(512),
            count: 0,
            last_t: 0,
            io_error: None,
        }
    }

    pub fn record(&mut self, t: u64, event: Event) {
        debug_assert!(t >= self.last_t, "trace time went backwards");
        self.last_t = t;
        let entry = TraceEntry { t, event };
        self.buf.clear();
        serde_json::to_writer(&mut self.buf, &entry).expect("trace events serialize");
        self.buf.push(b'\n');
        self.hasher.update(&self.buf);
        self.count += 1;
        match &mut self.sink {
            TraceSink::DigestOnly => {}
            TraceSink::Memory(v) => v.push(entry),
            TraceSink::Writer(w) => {
                if self.io_error.is_none() {
                    if let Err(e) = w.write_all(&self.buf) {
                        self.io_error = Some(e);
                    }
                }
            }
        }
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn finish(mut self) -> std::io::Result<FinishedTrace> {
        if let TraceSink::Writer(w) = &mut self.sink {
            if self.io_error.is_none() {
                if let Err(e) = w.flush() {
                    self.io_error = Some(e);
                }
            }
        }
        if let Some(e) = self.io_error {
            return Err(e);
        }
        let events = match self.sink {
            TraceSink::Memory(v) => Some(v),
            _ => None,
        };
        Ok(FinishedTrace {
            digest: Digest(self.hasher.finalize().into()),
            len: self.count,
            events,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinishedTrace {
    pub digest: Digest,
    pub len: u64,
    /// Present when the trace was kept in memory.
    pub events: Option<Vec<TraceEntry>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_jsonl_bytes() {
        let mut mem = Trace::new(TraceSink::Memory(Vec::new()));
        let mut only = Trace::new(TraceSink::DigestOnly);
        for t in [0, 5, 5, 9] {
            let ev = Event::TxFinal { tx: TxId([t as u8; 16]) };
            mem.record(t, ev.clone());
            only.record(t, ev);
        }
        let mem = mem.finish().unwrap();
        let only = only.finish().unwrap();
        assert_eq!(mem.digest, only.digest);
        let mut bytes = Vec::new();
        for e in mem.events.as_ref().unwrap() {
            serde_json::to_writer(&mut bytes, e).unwrap();
            bytes.push(b'\n');
        }
        assert_eq!(mem.digest, Digest::of(&bytes));
        let line = String::from_utf8(bytes).unwrap();
        assert!(line.starts_with(r#"{"t":0,"ev":"tx_final","tx":"00000000"#), "{line}");
    }

    #[test]
    fn lines_round_trip() {
        let e = TraceEntry {
            t: 3,
            event: Event::Appended {
                node: 1,
                height: 2,
                digest: Digest::of(b"x"),
                deltas: vec![(OperatorId::new("OP01").unwrap(), Wide(-5))],
                fee_pool: Wide(5),
                withholding_pool: Wide(i128::MIN),
            },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<TraceEntry>(&s).unwrap(), e);
    }
}
