//! Transaction records and their canonical byte encoding.
//!
//! Layout, in field order: `tx_id` (16 bytes), `timestamp_ms` (u64),
//! `sender`, `receiver` (u16-length-prefixed UTF-8), `amount` (u64),
//! `currency` (u16-length-prefixed), `fee` (u64), `withholding` (u64),
//! `status` (u8), `compliance_verdict` (u8, followed by a reason byte when
//! the verdict is `Rejected`). Integers are little-endian.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Reader};
use super::digest::Digest;

pub const MAX_OPERATOR_LEN: usize = 32;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OperatorId(String);

impl OperatorId {
    pub fn new(s: impl Into<String>) -> Result<Self, DecodeError> {
        let s = s.into();
        if s.is_empty() || s.len() > MAX_OPERATOR_LEN {
            return Err(DecodeError::InvalidOperator(s));
        }
        Ok(OperatorId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for OperatorId {
    type Error = DecodeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        OperatorId::new(s)
    }
}

impl From<OperatorId> for String {
    fn from(o: OperatorId) -> String {
        o.0
    }
}

impl fmt::Debug for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Three upper-case ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Currency([u8; 3]);

impl Currency {
    pub fn new(code: &str) -> Result<Self, DecodeError> {
        let b = code.as_bytes();
        if b.len() != 3 || !b.iter().all(|c| c.is_ascii_uppercase()) {
            return Err(DecodeError::InvalidCurrency(code.to_string()));
        }
        Ok(Currency([b[0], b[1], b[2]]))
    }

    pub fn as_str(&self) -> &str {
        // always ASCII by construction
        std::str::from_utf8(&self.0).unwrap_or("???")
    }
}

impl TryFrom<String> for Currency {
    type Error = DecodeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Currency::new(&s)
    }
}

impl From<Currency> for String {
    fn from(c: Currency) -> String {
        c.as_str().to_string()
    }
}

impl fmt::Debug for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TxId(pub [u8; 16]);

impl TxId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", self.to_hex())
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for TxId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 16] = v
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 hex chars"))?;
        Ok(TxId(arr))
    }
}

/// Six-stage settlement lifecycle, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxStatus {
    Initiated = 0,
    Validated = 1,
    Executed = 2,
    ConsensusApproved = 3,
    Appended = 4,
    Final = 5,
}

impl TxStatus {
    pub const ALL: [TxStatus; 6] = [
        TxStatus::Initiated,
        TxStatus::Validated,
        TxStatus::Executed,
        TxStatus::ConsensusApproved,
        TxStatus::Appended,
        TxStatus::Final,
    ];

    pub fn from_u8(v: u8) -> Option<TxStatus> {
        TxStatus::ALL.get(v as usize).copied()
    }

    pub fn next(self) -> Option<TxStatus> {
        TxStatus::from_u8(self as u8 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    Sanctioned = 0,
    KycExpired = 1,
    KycMissing = 2,
    InsufficientBalance = 3,
    AmountOutOfBounds = 4,
    CurrencyNotAllowed = 5,
    UnknownCurrencyPair = 6,
}

impl RejectReason {
    pub fn from_u8(v: u8) -> Option<RejectReason> {
        use RejectReason::*;
        Some(match v {
            0 => Sanctioned,
            1 => KycExpired,
            2 => KycMissing,
            3 => InsufficientBalance,
            4 => AmountOutOfBounds,
            5 => CurrencyNotAllowed,
            6 => UnknownCurrencyPair,
            _ => return None,
        })
    }

    /// Compliance-layer rejections, as opposed to business-rule violations.
    pub fn is_compliance(self) -> bool {
        matches!(
            self,
            RejectReason::Sanctioned | RejectReason::KycExpired | RejectReason::KycMissing
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComplianceVerdict {
    Unchecked,
    Passed,
    Rejected(RejectReason),
}

impl ComplianceVerdict {
    pub fn is_rejected(&self) -> bool {
        matches!(self, ComplianceVerdict::Rejected(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub tx_id: TxId,
    pub timestamp_ms: u64,
    pub sender: OperatorId,
    pub receiver: OperatorId,
    pub amount: u64,
    pub currency: Currency,
    pub fee: u64,
    pub withholding: u64,
    pub status: TxStatus,
    pub compliance_verdict: ComplianceVerdict,
}

impl TransactionRecord {
    /// A freshly initiated, unchecked instruction.
    pub fn initiate(
        tx_id: TxId,
        timestamp_ms: u64,
        sender: OperatorId,
        receiver: OperatorId,
        amount: u64,
        currency: Currency,
    ) -> Result<Self, DecodeError> {
        if sender == receiver {
            return Err(DecodeError::SelfTransfer);
        }
        Ok(TransactionRecord {
            tx_id,
            timestamp_ms,
            sender,
            receiver,
            amount,
            currency,
            fee: 0,
            withholding: 0,
            status: TxStatus::Initiated,
            compliance_verdict: ComplianceVerdict::Unchecked,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_tx_into(tx: &TransactionRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&tx.tx_id.0);
    out.extend_from_slice(&tx.timestamp_ms.to_le_bytes());
    put_str(out, tx.sender.as_str());
    put_str(out, tx.receiver.as_str());
    out.extend_from_slice(&tx.amount.to_le_bytes());
    put_str(out, tx.currency.as_str());
    out.extend_from_slice(&tx.fee.to_le_bytes());
    out.extend_from_slice(&tx.withholding.to_le_bytes());
    out.push(tx.status as u8);
    match tx.compliance_verdict {
        ComplianceVerdict::Unchecked => out.push(0),
        ComplianceVerdict::Passed => out.push(1),
        ComplianceVerdict::Rejected(r) => {
            out.push(2);
            out.push(r as u8);
        }
    }
}

pub fn canonical_bytes(tx: &TransactionRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(80);
    encode_tx_into(tx, &mut out);
    out
}

pub fn compute_tx_hash(tx: &TransactionRecord) -> Digest {
    Digest::of(&canonical_bytes(tx))
}

/// Reads exactly one canonical record from `r`.
pub fn decode_tx(r: &mut Reader<'_>) -> Result<TransactionRecord, DecodeError> {
    let tx_id = TxId(r.array::<16>()?);
    let timestamp_ms = r.u64()?;
    let sender = OperatorId::new(r.string()?)?;
    let receiver = OperatorId::new(r.string()?)?;
    if sender == receiver {
        return Err(DecodeError::SelfTransfer);
    }
    let amount = r.u64()?;
    let currency = Currency::new(&r.string()?)?;
    let fee = r.u64()?;
    let withholding = r.u64()?;
    let s = r.u8()?;
    let status = TxStatus::from_u8(s).ok_or(DecodeError::BadDiscriminant("status", s))?;
    let v = r.u8()?;
    let compliance_verdict = match v {
        0 => ComplianceVerdict::Unchecked,
        1 => ComplianceVerdict::Passed,
        2 => {
            let reason = r.u8()?;
            ComplianceVerdict::Rejected(
                RejectReason::from_u8(reason)
                    .ok_or(DecodeError::BadDiscriminant("reject_reason", reason))?,
            )
        }
        other => return Err(DecodeError::BadDiscriminant("compliance_verdict", other)),
    };
    Ok(TransactionRecord {
        tx_id,
        timestamp_ms,
        sender,
        receiver,
        amount,
        currency,
        fee,
        withholding,
        status,
        compliance_verdict,
    })
}

/// Decodes a buffer holding exactly one record.
pub fn decode_canonical(bytes: &[u8]) -> Result<TransactionRecord, DecodeError> {
    let mut r = Reader::new(bytes);
    let tx = decode_tx(&mut r)?;
    r.finish()?;
    Ok(tx)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture() -> TransactionRecord {
        let mut id = [0u8; 16];
        for (i, b) in id.iter_mut().enumerate() {
            *b = i as u8;
        }
        TransactionRecord {
            tx_id: TxId(id),
            timestamp_ms: 1700,
            sender: OperatorId::new("OP01").unwrap(),
            receiver: OperatorId::new("OP02").unwrap(),
            amount: 500_000,
            currency: Currency::new("USD").unwrap(),
            fee: 3_250,
            withholding: 0,
            status: TxStatus::Appended,
            compliance_verdict: ComplianceVerdict::Passed,
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let tx = fixture();
        assert_eq!(canonical_bytes(&tx), canonical_bytes(&tx.clone()));
        assert_eq!(compute_tx_hash(&tx), compute_tx_hash(&tx));
    }

    #[test]
    fn amount_is_part_of_the_encoding() {
        let a = fixture();
        let mut b = fixture();
        b.amount += 1;
        assert_ne!(canonical_bytes(&a), canonical_bytes(&b));
        let mut c = fixture();
        c.amount ^= 1 << 20;
        assert_ne!(compute_tx_hash(&a), compute_tx_hash(&c));
    }

    #[test]
    fn decode_inverts_encode() {
        let tx = fixture();
        assert_eq!(decode_canonical(&canonical_bytes(&tx)).unwrap(), tx);
        let mut rej = fixture();
        rej.compliance_verdict = ComplianceVerdict::Rejected(RejectReason::KycExpired);
        assert_eq!(decode_canonical(&canonical_bytes(&rej)).unwrap(), rej);
    }

    #[test]
    fn decode_rejects_garbage() {
        let mut bytes = canonical_bytes(&fixture());
        let status_at = bytes.len() - 2;
        bytes[status_at] = 9;
        assert!(matches!(
            decode_canonical(&bytes),
            Err(DecodeError::BadDiscriminant("status", 9))
        ));
        let bytes = canonical_bytes(&fixture());
        assert!(decode_canonical(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_canonical(&long), Err(DecodeError::TrailingBytes(1))));
    }

    #[test]
    fn operator_and_currency_validation() {
        assert!(OperatorId::new("").is_err());
        assert!(OperatorId::new("x".repeat(33)).is_err());
        assert!(OperatorId::new("x".repeat(32)).is_ok());
        assert!(Currency::new("usd").is_err());
        assert!(Currency::new("USDT").is_err());
        let a = OperatorId::new("A").unwrap();
        assert!(TransactionRecord::initiate(
            TxId::default(),
            0,
            a.clone(),
            a,
            1,
            Currency::new("USD").unwrap()
        )
        .is_err());
    }

    #[test]
    fn status_order() {
        assert_eq!(TxStatus::Initiated.next(), Some(TxStatus::Validated));
        assert_eq!(TxStatus::Final.next(), None);
        assert!(TxStatus::ConsensusApproved > TxStatus::Executed);
    }
}
