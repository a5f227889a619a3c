//! Transaction records, canonical encoding, hash-chained blocks and the
//! on-disk block log.

mod blocklog;
mod chain;
mod codec;
mod digest;
mod merkle;
mod tx;

pub use blocklog::{decode_block_log, encode_block_log, read_chain, write_json_export, MAGIC, VERSION};
pub use chain::{
    prepare_for_append, verify_chain, verify_chain_par, Block, BlockHeader, BrokenLinkKind,
    ChainVerdict, HashChain, LedgerError, HEADER_LEN,
};
pub use codec::{DecodeError, Reader};
pub use digest::Digest;
pub use merkle::payload_root;
pub use tx::{
    canonical_bytes, compute_tx_hash, decode_canonical, decode_tx, encode_tx_into,
    ComplianceVerdict, Currency, OperatorId, RejectReason, TransactionRecord, TxId, TxStatus,
    MAX_OPERATOR_LEN,
};

use crate::settlement::LedgerState;

/// Digest of a balance snapshot: entry count, then each operator in
/// ascending order as (u16 length, name, i128 balance), then the fee and
/// withholding pools. All integers little-endian.
pub fn state_digest(state: &LedgerState) -> Digest {
    let mut b = Vec::with_capacity(4 + state.balances.len() * 32 + 32);
    b.extend_from_slice(&(state.balances.len() as u32).to_le_bytes());
    for (op, bal) in &state.balances {
        b.extend_from_slice(&(op.as_str().len() as u16).to_le_bytes());
        b.extend_from_slice(op.as_str().as_bytes());
        b.extend_from_slice(&bal.to_le_bytes());
    }
    b.extend_from_slice(&state.fee_pool.to_le_bytes());
    b.extend_from_slice(&state.withholding_pool.to_le_bytes());
    Digest::of(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_state_digest() {
        assert_eq!(
            state_digest(&LedgerState::default()).to_hex(),
            "6db65fd59fd356f6729140571b5bcd6bb3b83492a16e1bf0a3884442fc3c8a0e"
        );
    }

    #[test]
    fn digest_tracks_balances() {
        let a = OperatorId::new("A").unwrap();
        let s1 = LedgerState::with_balances([(a.clone(), 1)]);
        let s2 = LedgerState::with_balances([(a, 2)]);
        assert_ne!(state_digest(&s1), state_digest(&s2));
    }
}
