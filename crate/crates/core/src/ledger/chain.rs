//! Hash-chained block storage and verification.
//!
//! A chain is kept as the exact byte records that go into a block log
//! (84-byte header followed by canonical transaction records), plus the
//! digest of the tip header recorded at append time. Verification always
//! works from those bytes, so a flipped byte anywhere is observable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{DecodeError, Reader};
use super::digest::Digest;
use super::merkle::payload_root;
use super::tx::{decode_tx, encode_tx_into, TransactionRecord, TxId, TxStatus};

pub const HEADER_LEN: usize = 84;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("cannot append an empty batch")]
    EmptyBatch,
    #[error("transaction {tx_id} has status {status:?}; consensus approval required")]
    StatusViolation { tx_id: TxId, status: TxStatus },
    #[error("block height {got} does not extend tip {tip}")]
    NotNextHeight { tip: u64, got: u64 },
    #[error("block prev_hash does not match the chain head")]
    PrevHashMismatch,
    #[error("tamper target out of range: height {height}, byte {byte_offset}")]
    OutOfRange { height: u64, byte_offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub timestamp_ms: u64,
    pub prev_hash: Digest,
    pub payload_root: Digest,
    pub tx_count: u32,
}

impl BlockHeader {
    pub fn genesis() -> BlockHeader {
        BlockHeader {
            height: 0,
            timestamp_ms: 0,
            prev_hash: Digest::ZERO,
            payload_root: payload_root(&[]),
            tx_count: 0,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..8].copy_from_slice(&self.height.to_le_bytes());
        b[8..16].copy_from_slice(&self.timestamp_ms.to_le_bytes());
        b[16..48].copy_from_slice(self.prev_hash.as_bytes());
        b[48..80].copy_from_slice(self.payload_root.as_bytes());
        b[80..84].copy_from_slice(&self.tx_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<BlockHeader, DecodeError> {
        if b.len() < HEADER_LEN {
            return Err(DecodeError::ShortHeader);
        }
        let mut r = Reader::new(&b[..HEADER_LEN]);
        Ok(BlockHeader {
            height: r.u64()?,
            timestamp_ms: r.u64()?,
            prev_hash: Digest(r.array()?),
            payload_root: Digest(r.array()?),
            tx_count: r.u32()?,
        })
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<TransactionRecord>,
}

impl Block {
    /// Builds a block over `txs` exactly as given (no status changes).
    pub fn assemble(
        height: u64,
        timestamp_ms: u64,
        prev_hash: Digest,
        txs: Vec<TransactionRecord>,
    ) -> Block {
        let leaves: Vec<Digest> = txs.iter().map(super::tx::compute_tx_hash).collect();
        Block {
            header: BlockHeader {
                height,
                timestamp_ms,
                prev_hash,
                payload_root: payload_root(&leaves),
                tx_count: txs.len() as u32,
            },
            txs,
        }
    }

    pub fn digest(&self) -> Digest {
        self.header.digest()
    }

    pub fn to_record(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.txs.len() * 80);
        out.extend_from_slice(&self.header.to_bytes());
        for tx in &self.txs {
            encode_tx_into(tx, &mut out);
        }
        out
    }

    pub fn from_record(record: &[u8]) -> Result<Block, DecodeError> {
        let header = BlockHeader::from_bytes(record)?;
        let mut r = Reader::new(&record[HEADER_LEN..]);
        let mut txs = Vec::with_capacity(header.tx_count.min(4096) as usize);
        for _ in 0..header.tx_count {
            txs.push(decode_tx(&mut r)?);
        }
        r.finish()?;
        Ok(Block { header, txs })
    }
}

/// Marks consensus-approved transactions as appended. Rejected records
/// keep the stage they stopped at; they are carried for audit completeness.
pub fn prepare_for_append(txs: &mut [TransactionRecord]) -> Result<(), LedgerError> {
    if txs.is_empty() {
        return Err(LedgerError::EmptyBatch);
    }
    for tx in txs.iter() {
        if !tx.compliance_verdict.is_rejected() && tx.status < TxStatus::ConsensusApproved {
            return Err(LedgerError::StatusViolation {
                tx_id: tx.tx_id,
                status: tx.status,
            });
        }
    }
    for tx in txs.iter_mut() {
        if !tx.compliance_verdict.is_rejected() && tx.status < TxStatus::Appended {
            tx.status = TxStatus::Appended;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BrokenLinkKind {
    PrevHashMismatch,
    PayloadRootMismatch,
    HeightGap,
    /// Record bytes that do not parse as a header plus `tx_count` transactions.
    MalformedRecord,
    /// The tip header no longer matches the head digest recorded at append.
    HeadMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainVerdict {
    pub valid: bool,
    pub first_broken_height: Option<u64>,
    pub broken_link_kind: Option<BrokenLinkKind>,
}

impl ChainVerdict {
    pub const VALID: ChainVerdict = ChainVerdict {
        valid: true,
        first_broken_height: None,
        broken_link_kind: None,
    };

    fn broken(height: u64, kind: BrokenLinkKind) -> ChainVerdict {
        ChainVerdict {
            valid: false,
            first_broken_height: Some(height),
            broken_link_kind: Some(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashChain {
    records: Vec<Vec<u8>>,
    head: Digest,
}

impl Default for HashChain {
    fn default() -> Self {
        Self::new()
    }
}

impl HashChain {
    /// A chain holding only the genesis block.
    pub fn new() -> HashChain {
        let genesis = Block {
            header: BlockHeader::genesis(),
            txs: Vec::new(),
        };
        HashChain {
            head: genesis.digest(),
            records: vec![genesis.to_record()],
        }
    }

    /// Rebuilds a chain from raw records. The head is anchored to the
    /// supplied digest, or to the last record's header when none is known.
    pub fn from_records(records: Vec<Vec<u8>>, head: Option<Digest>) -> HashChain {
        let head = head.unwrap_or_else(|| {
            records
                .last()
                .and_then(|r| BlockHeader::from_bytes(r).ok())
                .map(|h| h.digest())
                .unwrap_or(Digest::ZERO)
        });
        HashChain { records, head }
    }

    pub fn records(&self) -> &[Vec<u8>] {
        &self.records
    }

    pub fn head(&self) -> Digest {
        self.head
    }

    /// Number of blocks including genesis.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tip_height(&self) -> u64 {
        self.records.len() as u64 - 1
    }

    pub fn header(&self, height: u64) -> Option<BlockHeader> {
        self.records
            .get(height as usize)
            .and_then(|r| BlockHeader::from_bytes(r).ok())
    }

    pub fn block(&self, height: u64) -> Option<Result<Block, DecodeError>> {
        self.records
            .get(height as usize)
            .map(|r| Block::from_record(r))
    }

    pub fn blocks(&self) -> impl Iterator<Item = Result<Block, DecodeError>> + '_ {
        self.records.iter().map(|r| Block::from_record(r))
    }

    /// Appends an already-assembled block that extends the current head.
    pub fn push_block(&mut self, block: &Block) -> Result<Digest, LedgerError> {
        let tip = self.tip_height();
        if block.header.height != tip + 1 {
            return Err(LedgerError::NotNextHeight {
                tip,
                got: block.header.height,
            });
        }
        if block.header.prev_hash != self.head {
            return Err(LedgerError::PrevHashMismatch);
        }
        let digest = block.digest();
        self.records.push(block.to_record());
        self.head = digest;
        Ok(digest)
    }

    /// Appends `txs` as the next block. Approved transactions advance to
    /// `Appended`.
    pub fn append_block(
        &mut self,
        mut txs: Vec<TransactionRecord>,
        timestamp_ms: u64,
    ) -> Result<Block, LedgerError> {
        prepare_for_append(&mut txs)?;
        let block = Block::assemble(self.tip_height() + 1, timestamp_ms, self.head, txs);
        self.push_block(&block)?;
        Ok(block)
    }

    /// Copy of the chain with one byte XOR-flipped (mask `0x01`) inside
    /// the record of block `height`.
    pub fn tamper(&self, height: u64, byte_offset: usize) -> Result<HashChain, LedgerError> {
        let mut copy = self.clone();
        copy.flip_byte(height, byte_offset, 0x01)?;
        Ok(copy)
    }

    /// In-place XOR of one record byte. Applying the same flip twice
    /// restores the original bytes.
    pub fn flip_byte(&mut self, height: u64, byte_offset: usize, mask: u8) -> Result<(), LedgerError> {
        let rec = self
            .records
            .get_mut(height as usize)
            .filter(|r| byte_offset < r.len())
            .ok_or(LedgerError::OutOfRange {
                height,
                byte_offset,
            })?;
        rec[byte_offset] ^= mask;
        Ok(())
    }

    /// Removes the block at `height`, leaving the rest untouched. Used to
    /// model a spliced log.
    pub fn splice_out(&mut self, height: u64) -> Result<(), LedgerError> {
        if height as usize >= self.records.len() {
            return Err(LedgerError::OutOfRange {
                height,
                byte_offset: 0,
            });
        }
        self.records.remove(height as usize);
        Ok(())
    }

    /// Chain truncated to blocks `[0, len)`, re-anchored at the new tip.
    pub fn prefix(&self, len: usize) -> HashChain {
        HashChain::from_records(self.records[..len.min(self.records.len())].to_vec(), None)
    }
}

struct Parsed {
    header: BlockHeader,
    digest: Digest,
    root_ok: bool,
}

fn parse_record(rec: &[u8]) -> Result<Parsed, DecodeError> {
    let header = BlockHeader::from_bytes(rec)?;
    let mut r = Reader::new(&rec[HEADER_LEN..]);
    let mut leaves = Vec::with_capacity(header.tx_count.min(4096) as usize);
    for _ in 0..header.tx_count {
        let start = HEADER_LEN + r.position();
        decode_tx(&mut r)?;
        let end = HEADER_LEN + r.position();
        leaves.push(Digest::of(&rec[start..end]));
    }
    r.finish()?;
    Ok(Parsed {
        digest: header.digest(),
        root_ok: payload_root(&leaves) == header.payload_root,
        header,
    })
}

/// Checks block `i` given its predecessor's header digest (`None` for
/// genesis). Returns the reported height and failure kind.
fn check_block(
    rec: &[u8],
    i: usize,
    prev_digest: Option<Digest>,
    is_tip: bool,
    head: Digest,
) -> Option<(u64, BrokenLinkKind)> {
    let parsed = match parse_record(rec) {
        Ok(p) => p,
        Err(_) => return Some((i as u64, BrokenLinkKind::MalformedRecord)),
    };
    let expected_prev = prev_digest.unwrap_or(Digest::ZERO);
    if parsed.header.prev_hash != expected_prev {
        // reported at the height the block claims, so a spliced log is
        // flagged at the first block whose predecessor went missing
        return Some((parsed.header.height, BrokenLinkKind::PrevHashMismatch));
    }
    if parsed.header.height != i as u64 {
        return Some((i as u64, BrokenLinkKind::HeightGap));
    }
    if !parsed.root_ok {
        return Some((i as u64, BrokenLinkKind::PayloadRootMismatch));
    }
    if is_tip && parsed.digest != head {
        return Some((i as u64, BrokenLinkKind::HeadMismatch));
    }
    None
}

fn header_digest(rec: &[u8]) -> Option<Digest> {
    BlockHeader::from_bytes(rec).ok().map(|h| h.digest())
}

/// Sequential verification; stops at the lowest failing block.
pub fn verify_chain(chain: &HashChain) -> ChainVerdict {
    let recs = chain.records();
    if recs.is_empty() {
        return ChainVerdict::broken(0, BrokenLinkKind::MalformedRecord);
    }
    let mut prev: Option<Digest> = None;
    for (i, rec) in recs.iter().enumerate() {
        if let Some((h, kind)) = check_block(rec, i, prev, i + 1 == recs.len(), chain.head()) {
            return ChainVerdict::broken(h, kind);
        }
        prev = header_digest(rec);
    }
    ChainVerdict::VALID
}

/// Same verdict as [`verify_chain`], with the per-block work spread over
/// the rayon pool.
pub fn verify_chain_par(chain: &HashChain) -> ChainVerdict {
    let recs = chain.records();
    if recs.is_empty() {
        return ChainVerdict::broken(0, BrokenLinkKind::MalformedRecord);
    }
    let digests: Vec<Option<Digest>> = recs.par_iter().map(|r| header_digest(r)).collect();
    let first = (0..recs.len())
        .into_par_iter()
        .filter_map(|i| {
            let prev = if i == 0 { None } else { digests[i - 1] };
            if i > 0 && prev.is_none() {
                // the predecessor itself is malformed and will be reported lower
                return None;
            }
            check_block(&recs[i], i, prev, i + 1 == recs.len(), chain.head()).map(|v| (i, v))
        })
        .min_by_key(|(i, _)| *i);
    match first {
        Some((_, (h, kind))) => ChainVerdict::broken(h, kind),
        None => ChainVerdict::VALID,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::tx::{ComplianceVerdict, Currency, OperatorId};

    pub(crate) fn approved_tx(n: u64) -> TransactionRecord {
        let mut id = [0u8; 16];
        id[..8].copy_from_slice(&n.to_le_bytes());
        TransactionRecord {
            tx_id: TxId(id),
            timestamp_ms: n,
            sender: OperatorId::new(format!("OP{:02}", n % 7)).unwrap(),
            receiver: OperatorId::new(format!("OP{:02}", n % 7 + 1)).unwrap(),
            amount: 1_000 + n,
            currency: Currency::new("USD").unwrap(),
            fee: n % 13,
            withholding: 0,
            status: TxStatus::ConsensusApproved,
            compliance_verdict: ComplianceVerdict::Passed,
        }
    }

    fn chain_of(blocks: u64, per_block: u64) -> HashChain {
        let mut c = HashChain::new();
        let mut n = 0;
        for b in 0..blocks {
            let txs = (0..per_block)
                .map(|_| {
                    n += 1;
                    approved_tx(n)
                })
                .collect();
            c.append_block(txs, 1_000 * (b + 1)).unwrap();
        }
        c
    }

    #[test]
    fn genesis_append() {
        let mut c = HashChain::new();
        let genesis_digest = BlockHeader::genesis().digest();
        let block = c.append_block(vec![approved_tx(1)], 5).unwrap();
        assert_eq!(block.header.height, 1);
        assert_eq!(block.header.prev_hash, genesis_digest);
        assert_eq!(block.txs[0].status, TxStatus::Appended);
        assert_eq!(verify_chain(&c), ChainVerdict::VALID);
    }

    #[test]
    fn append_errors() {
        let mut c = HashChain::new();
        assert_eq!(c.append_block(vec![], 1), Err(LedgerError::EmptyBatch));
        let mut tx = approved_tx(1);
        tx.status = TxStatus::Executed;
        assert!(matches!(
            c.append_block(vec![tx], 1),
            Err(LedgerError::StatusViolation { .. })
        ));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn thousand_sequential_appends() {
        let c = chain_of(1_000, 1);
        assert_eq!(c.tip_height(), 1_000);
        for h in 1..=1_000u64 {
            let hdr = c.header(h).unwrap();
            assert_eq!(hdr.height, h);
            assert_eq!(hdr.prev_hash, c.header(h - 1).unwrap().digest());
        }
        assert!(verify_chain(&c).valid);
    }

    #[test]
    fn append_leaves_prefix_untouched() {
        let mut c = chain_of(10, 2);
        let before = c.records().to_vec();
        c.append_block(vec![approved_tx(999)], 99_000).unwrap();
        assert_eq!(&c.records()[..before.len()], &before[..]);
    }

    #[test]
    fn tx_byte_mutation_in_block_5() {
        let c = chain_of(100, 3);
        assert!(verify_chain(&c).valid);
        // first byte of the first transaction's amount field region
        let t = c.tamper(5, HEADER_LEN + 20).unwrap();
        let v = verify_chain(&t);
        assert!(!v.valid);
        assert_eq!(v.first_broken_height, Some(5));
        assert_eq!(v.broken_link_kind, Some(BrokenLinkKind::PayloadRootMismatch));
        assert!(verify_chain(&c).valid, "original untouched");
    }

    #[test]
    fn spliced_block_detected_at_successor() {
        let mut c = chain_of(20, 1);
        c.splice_out(7).unwrap();
        let v = verify_chain(&c);
        assert!(!v.valid);
        assert_eq!(v.first_broken_height, Some(8));
        assert!(matches!(
            v.broken_link_kind,
            Some(BrokenLinkKind::PrevHashMismatch) | Some(BrokenLinkKind::HeightGap)
        ));
    }

    #[test]
    fn tamper_is_an_involution() {
        let c = chain_of(5, 2);
        let once = c.tamper(3, 90).unwrap();
        assert!(!verify_chain(&once).valid);
        let twice = once.tamper(3, 90).unwrap();
        assert_eq!(twice, c);
        assert!(verify_chain(&twice).valid);
    }

    #[test]
    fn genesis_header_tamper_breaks_height_one_link() {
        let c = chain_of(3, 1);
        // genesis timestamp byte
        let t = c.tamper(0, 8).unwrap();
        let v = verify_chain(&t);
        assert_eq!(v.first_broken_height, Some(1));
        assert_eq!(v.broken_link_kind, Some(BrokenLinkKind::PrevHashMismatch));
    }

    #[test]
    fn tamper_out_of_range() {
        let c = chain_of(2, 1);
        assert!(matches!(c.tamper(3, 0), Err(LedgerError::OutOfRange { .. })));
        let len = c.records()[1].len();
        assert!(matches!(c.tamper(1, len), Err(LedgerError::OutOfRange { .. })));
    }

    #[test]
    fn tip_header_is_anchored_by_head() {
        let c = chain_of(4, 1);
        let t = c.tamper(4, 9).unwrap();
        let v = verify_chain(&t);
        assert_eq!(v.first_broken_height, Some(4));
        assert_eq!(v.broken_link_kind, Some(BrokenLinkKind::HeadMismatch));
    }

    #[test]
    fn height_field_tamper() {
        let c = chain_of(6, 1);
        let v = verify_chain(&c.tamper(3, 0).unwrap());
        assert_eq!(v.first_broken_height, Some(3));
        assert_eq!(v.broken_link_kind, Some(BrokenLinkKind::HeightGap));
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = chain_of(40, 2);
        assert_eq!(verify_chain_par(&c), verify_chain(&c));
        for (h, off) in [(0usize, 3usize), (7, 8), (12, 100), (40, 10), (20, 83)] {
            let t = c.tamper(h as u64, off).unwrap();
            assert_eq!(verify_chain_par(&t), verify_chain(&t), "h={h} off={off}");
        }
    }

    #[test]
    fn rejected_records_are_appendable() {
        let mut c = HashChain::new();
        let mut rej = approved_tx(3);
        rej.status = TxStatus::Initiated;
        rej.compliance_verdict =
            ComplianceVerdict::Rejected(crate::ledger::tx::RejectReason::Sanctioned);
        let b = c.append_block(vec![approved_tx(1), rej], 10).unwrap();
        assert_eq!(b.txs[1].status, TxStatus::Initiated);
        assert!(verify_chain(&c).valid);
    }
}
