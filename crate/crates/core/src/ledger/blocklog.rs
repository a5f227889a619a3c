//! Block-log file format.
//!
//! ```text
//! "SBLK" | version: u16 LE (=1) | { record_len: u32 LE | record }*
//! record = header (84 bytes) | tx_count canonical transaction records
//! ```

use std::io::Write;

use serde::Serialize;

use super::chain::{Block, BlockHeader, HashChain};
use super::codec::{DecodeError, Reader};
use super::digest::Digest;
use super::tx::TransactionRecord;

pub const MAGIC: &[u8; 4] = b"SBLK";
pub const VERSION: u16 = 1;

pub fn encode_block_log(chain: &HashChain) -> Vec<u8> {
    let total: usize = chain.records().iter().map(|r| r.len() + 4).sum();
    let mut out = Vec::with_capacity(6 + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for rec in chain.records() {
        out.extend_from_slice(&(rec.len() as u32).to_le_bytes());
        out.extend_from_slice(rec);
    }
    out
}

/// Splits a block log into raw records. Record contents are not
/// interpreted here; `verify_chain` judges them.
pub fn decode_block_log(bytes: &[u8]) -> Result<Vec<Vec<u8>>, DecodeError> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| DecodeError::BadMagic)?;
    if magic != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let mut records = Vec::new();
    while r.remaining() > 0 {
        let len = r.u32()? as usize;
        records.push(r.take(len)?.to_vec());
    }
    if records.is_empty() {
        return Err(DecodeError::UnexpectedEof {
            offset: r.position(),
            needed: 4,
        });
    }
    Ok(records)
}

/// Loads a chain from block-log bytes. Without an external `head`, the
/// tip is trusted as read.
pub fn read_chain(bytes: &[u8], head: Option<Digest>) -> Result<HashChain, DecodeError> {
    Ok(HashChain::from_records(decode_block_log(bytes)?, head))
}

#[derive(Serialize)]
struct JsonBlock<'a> {
    height: u64,
    timestamp_ms: u64,
    prev_hash: Digest,
    payload_root: Digest,
    tx_count: u32,
    digest: Digest,
    txs: &'a [TransactionRecord],
}

/// One JSON object per block, newline-terminated. Blocks that fail to
/// decode are emitted as `{"height":..,"malformed":true}`.
pub fn write_json_export<W: Write>(chain: &HashChain, mut w: W) -> std::io::Result<()> {
    for (i, rec) in chain.records().iter().enumerate() {
        match Block::from_record(rec) {
            Ok(Block { header, txs }) => {
                let BlockHeader {
                    height,
                    timestamp_ms,
                    prev_hash,
                    payload_root,
                    tx_count,
                } = header;
                let jb = JsonBlock {
                    height,
                    timestamp_ms,
                    prev_hash,
                    payload_root,
                    tx_count,
                    digest: header.digest(),
                    txs: &txs,
                };
                serde_json::to_writer(&mut w, &jb)?;
            }
            Err(_) => {
                write!(w, "{{\"height\":{i},\"malformed\":true}}")?;
            }
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}
