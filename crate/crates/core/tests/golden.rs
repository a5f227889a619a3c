//! Byte-level checks against values frozen by `fixtures/gen_golden.py`, an
//! encoder written independently of this crate.

use serde_json::Value;
use settlesim::ledger::{
    canonical_bytes, compute_tx_hash, decode_canonical, payload_root, read_chain, state_digest, verify_chain,
    ComplianceVerdict, Currency, Digest, HashChain, OperatorId, RejectReason, TransactionRecord, TxId, TxStatus,
};
use settlesim::settlement::{compute_fee, LedgerState};
use settlesim::simnet::SimRng;

fn golden() -> Value {
    serde_json::from_str(include_str!("fixtures/golden.json")).unwrap()
}

fn g(key: &str) -> String {
    golden()[key].as_str().unwrap().to_string()
}

fn fixture_tx() -> TransactionRecord {
    TransactionRecord {
        tx_id: TxId(std::array::from_fn(|i| i as u8)),
        timestamp_ms: 1_700,
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

fn rejected_tx() -> TransactionRecord {
    TransactionRecord {
        tx_id: TxId([0xAA; 16]),
        timestamp_ms: 42,
        sender: OperatorId::new("SANCT").unwrap(),
        receiver: OperatorId::new("OP02").unwrap(),
        amount: 10,
        currency: Currency::new("EUR").unwrap(),
        fee: 0,
        withholding: 0,
        status: TxStatus::Initiated,
        compliance_verdict: ComplianceVerdict::Rejected(RejectReason::Sanctioned),
    }
}

#[test]
fn canonical_encoding() {
    let tx = fixture_tx();
    assert_eq!(hex::encode(canonical_bytes(&tx)), g("fixture_tx_canonical_hex"));
    assert_eq!(canonical_bytes(&tx), include_bytes!("fixtures/fixture_tx.bin"));
    assert_eq!(compute_tx_hash(&tx).to_hex(), g("fixture_tx_sha256"));
    let rej = rejected_tx();
    assert_eq!(hex::encode(canonical_bytes(&rej)), g("rejected_tx_canonical_hex"));
    assert_eq!(compute_tx_hash(&rej).to_hex(), g("rejected_tx_sha256"));
}

#[test]
fn decode_round_trip() {
    let bytes = hex::decode(g("rejected_tx_canonical_hex")).unwrap();
    assert_eq!(decode_canonical(&bytes).unwrap(), rejected_tx());
    assert_eq!(decode_canonical(include_bytes!("fixtures/fixture_tx.bin")).unwrap(), fixture_tx());
}

#[test]
fn merkle_and_state() {
    assert_eq!(payload_root(&[]).to_hex(), g("empty_string_sha256"));
    assert_eq!(payload_root(&[compute_tx_hash(&fixture_tx())]).to_hex(), g("merkle_single_fixture"));
    assert_eq!(state_digest(&LedgerState::default()).to_hex(), g("empty_state_digest"));
}

#[test]
fn fixture_chain_log() {
    let bytes = include_bytes!("fixtures/fixture_chain.sblk");
    let head = Digest::from_hex(&g("fixture_chain_head")).unwrap();
    let chain = read_chain(bytes, Some(head)).unwrap();
    assert!(verify_chain(&chain).valid);

    let mut built = HashChain::new();
    let mut tx = fixture_tx();
    tx.status = TxStatus::ConsensusApproved;
    built.append_block(vec![tx], 2_000).unwrap();
    assert_eq!(built.head(), head);
    assert_eq!(settlesim::ledger::encode_block_log(&built), bytes.to_vec());
}

#[test]
fn half_up_fees() {
    for pair in golden()["fees_65bp"].as_array().unwrap() {
        let amount = pair[0].as_u64().unwrap();
        assert_eq!(compute_fee(amount, 65), pair[1].as_u64().unwrap(), "amount {amount}");
    }
}

#[test]
fn rng_streams() {
    for (seed, key) in [(42, "xoshiro256ss_seed42_first8"), (0, "xoshiro256ss_seed0_first4")] {
        let mut rng = SimRng::new(seed);
        for v in golden()[key].as_array().unwrap() {
            assert_eq!(rng.next_u64().to_string(), v.as_str().unwrap());
        }
    }
}
