use std::collections::BTreeMap;

use serde::Serialize;

use crate::ledger::{ChainVerdict, Digest, HashChain};

/// What reconciliation needs from one node.
#[derive(Debug, Clone, Copy)]
pub struct NodeSnapshot<'a> {
    pub index: u16,
    pub chain: &'a HashChain,
    pub state_digest: Digest,
    pub verdict: ChainVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    /// Valid chain that is a strict prefix of the reference.
    Lagging,
    /// Valid chain whose records differ from the reference.
    Divergent,
    /// Chain fails verification.
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub node: u16,
    pub kind: MismatchKind,
    /// Lowest height at which the node's view can no longer be trusted.
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconciliationReport {
    pub reference_nodes: Vec<u16>,
    pub reference_head: Digest,
    pub reference_state: Digest,
    pub reference_height: u64,
    pub mismatches: Vec<Mismatch>,
}

impl ReconciliationReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn first_difference(a: &HashChain, b: &HashChain) -> Option<u64> {
    let (ra, rb) = (a.records(), b.records());
    (0..ra.len().min(rb.len()))
        .find(|&i| ra[i] != rb[i])
        .map(|i| i as u64)
}

/// Picks the largest group of nodes agreeing on (state, head) among those
/// whose chains verify, lowest member index breaking ties, and reports
/// every node outside it.
pub fn reconcile_nodes(nodes: &[NodeSnapshot<'_>]) -> ReconciliationReport {
    let mut groups: BTreeMap<(Digest, Digest), Vec<u16>> = BTreeMap::new();
    for n in nodes.iter().filter(|n| n.verdict.valid) {
        groups.entry((n.state_digest, n.chain.head())).or_default().push(n.index);
    }
    let best = groups
        .into_iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.1[0].cmp(&a.1[0])));
    let Some(((state, head), members)) = best else {
        return ReconciliationReport {
            reference_nodes: Vec::new(),
            reference_head: Digest::ZERO,
            reference_state: Digest::ZERO,
            reference_height: 0,
            mismatches: nodes
                .iter()
                .map(|n| Mismatch {
                    node: n.index,
                    kind: MismatchKind::Corrupt,
                    height: n.verdict.first_broken_height.unwrap_or(0),
                })
                .collect(),
        };
    };
    let reference = nodes.iter().find(|n| n.index == members[0]).expect("member").chain;
    let mut mismatches = Vec::new();
    for n in nodes.iter().filter(|n| !members.contains(&n.index)) {
        let diff = first_difference(n.chain, reference);
        let m = if !n.verdict.valid {
            let broken = n.verdict.first_broken_height.unwrap_or(0);
            Mismatch {
                node: n.index,
                kind: MismatchKind::Corrupt,
                height: diff.map_or(broken, |d| d.min(broken)),
            }
        } else if let Some(d) = diff {
            Mismatch {
                node: n.index,
                kind: MismatchKind::Divergent,
                height: d,
            }
        } else if n.chain.len() < reference.len() {
            Mismatch {
                node: n.index,
                kind: MismatchKind::Lagging,
                height: n.chain.len() as u64,
            }
        } else {
            // same records but a different state, or a longer chain
            Mismatch {
                node: n.index,
                kind: MismatchKind::Divergent,
                height: reference.len() as u64,
            }
        };
        mismatches.push(m);
    }
    ReconciliationReport {
        reference_nodes: members,
        reference_head: head,
        reference_state: state,
        reference_height: reference.tip_height(),
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{verify_chain, ComplianceVerdict, Currency, OperatorId, TransactionRecord, TxId, TxStatus};

    fn tx(n: u64) -> TransactionRecord {
        let mut r = TransactionRecord::initiate(
            TxId([n as u8; 16]),
            n,
            OperatorId::new("OP01").unwrap(),
            OperatorId::new("OP02").unwrap(),
            100 + n,
            Currency::new("USD").unwrap(),
        )
        .unwrap();
        r.status = TxStatus::ConsensusApproved;
        r.compliance_verdict = ComplianceVerdict::Passed;
        r
    }

    fn chain(blocks: u64) -> HashChain {
        let mut c = HashChain::new();
        for h in 1..=blocks {
            c.append_block(vec![tx(h)], h).unwrap();
        }
        c
    }

    fn snap(index: u16, chain: &HashChain, state: u8) -> NodeSnapshot<'_> {
        NodeSnapshot {
            index,
            chain,
            state_digest: Digest([state; 32]),
            verdict: verify_chain(chain),
        }
    }

    #[test]
    fn identical_nodes_are_clean() {
        let c = chain(5);
        let r = reconcile_nodes(&[snap(0, &c, 1), snap(1, &c, 1), snap(2, &c, 1)]);
        assert!(r.is_clean());
        assert_eq!(r.reference_nodes, vec![0, 1, 2]);
        assert_eq!(r.reference_height, 5);
    }

    #[test]
    fn tampered_node_flagged_at_block() {
        let c = chain(8);
        let mut bad = c.clone();
        bad.flip_byte(5, 100, 0x01).unwrap();
        let r = reconcile_nodes(&[snap(0, &c, 1), snap(1, &c, 1), snap(2, &bad, 1), snap(3, &c, 1)]);
        assert_eq!(
            r.mismatches,
            vec![Mismatch {
                node: 2,
                kind: MismatchKind::Corrupt,
                height: 5
            }]
        );
    }

    #[test]
    fn lagging_and_divergent() {
        let c = chain(6);
        let short = c.prefix(4);
        let r = reconcile_nodes(&[snap(0, &c, 1), snap(1, &c, 1), snap(2, &short, 2), snap(3, &c, 9)]);
        assert_eq!(r.mismatches.len(), 2);
        assert_eq!(r.mismatches[0].kind, MismatchKind::Lagging);
        assert_eq!(r.mismatches[0].height, 4);
        assert_eq!(r.mismatches[1].kind, MismatchKind::Divergent);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let a = chain(3);
        let b = chain(2);
        let r = reconcile_nodes(&[snap(0, &b, 2), snap(1, &a, 1)]);
        assert_eq!(r.reference_nodes, vec![0]);
    }
}
