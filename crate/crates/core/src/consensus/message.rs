use serde::{Deserialize, Serialize};

use crate::ledger::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidatorId {
    pub index: u16,
    pub name: String,
}

impl ValidatorId {
    pub fn committee(n: u16) -> Vec<ValidatorId> {
        (0..n)
            .map(|index| ValidatorId {
                index,
                name: format!("v{index}"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgKind {
    PrePrepare = 0,
    Prepare = 1,
    Commit = 2,
    ViewChange = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub kind: MsgKind,
    pub view: u64,
    pub height: u64,
    pub block_digest: Digest,
    pub sender: u16,
    pub auth_tag: Digest,
}

impl ConsensusMessage {
    fn signing_bytes(kind: MsgKind, view: u64, height: u64, digest: &Digest, sender: u16) -> [u8; 51] {
        let mut b = [0u8; 51];
        b[0] = kind as u8;
        b[1..9].copy_from_slice(&view.to_le_bytes());
        b[9..17].copy_from_slice(&height.to_le_bytes());
        b[17..49].copy_from_slice(digest.as_bytes());
        b[49..51].copy_from_slice(&sender.to_le_bytes());
        b
    }
}

/// Simulated signatures: each validator owns a secret key and tags messages
/// with SHA-256(key || message fields). Every validator can check any tag,
/// but only the key holder can produce one, so a byzantine node cannot
/// speak for another sender.
#[derive(Debug, Clone)]
pub struct Keyring {
    keys: Vec<[u8; 32]>,
}

impl Keyring {
    pub fn derive(seed: u64, n: u16) -> Keyring {
        let keys = (0..n)
            .map(|i| {
                Digest::of_parts(&[b"validator-key", &seed.to_le_bytes(), &i.to_le_bytes()]).0
            })
            .collect();
        Keyring { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn tag(&self, kind: MsgKind, view: u64, height: u64, digest: &Digest, sender: u16) -> Option<Digest> {
        let key = self.keys.get(sender as usize)?;
        let body = ConsensusMessage::signing_bytes(kind, view, height, digest, sender);
        Some(Digest::of_parts(&[key, &body]))
    }

    /// Builds a message signed by `sender`. Panics if `sender` has no key.
    pub fn sign(&self, kind: MsgKind, view: u64, height: u64, block_digest: Digest, sender: u16) -> ConsensusMessage {
        let auth_tag = self
            .tag(kind, view, height, &block_digest, sender)
            .expect("sender is a committee member");
        ConsensusMessage {
            kind,
            view,
            height,
            block_digest,
            sender,
            auth_tag,
        }
    }

    pub fn verify(&self, m: &ConsensusMessage) -> bool {
        self.tag(m.kind, m.view, m.height, &m.block_digest, m.sender) == Some(m.auth_tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_bind_every_field() {
        let k = Keyring::derive(7, 4);
        let m = k.sign(MsgKind::Prepare, 1, 2, Digest::of(b"x"), 3);
        assert!(k.verify(&m));
        let mut forged = m;
        forged.sender = 2;
        assert!(!k.verify(&forged));
        let mut bumped = m;
        bumped.height = 3;
        assert!(!k.verify(&bumped));
        let mut out_of_range = m;
        out_of_range.sender = 9;
        assert!(!k.verify(&out_of_range));
    }

    #[test]
    fn keys_depend_on_seed() {
        let m = Keyring::derive(1, 4).sign(MsgKind::Commit, 0, 1, Digest::ZERO, 0);
        assert!(!Keyring::derive(2, 4).verify(&m));
    }
}
