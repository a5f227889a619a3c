//! Replays the fuzz corpus, plus single-byte and truncation mutants of each
//! seed, through the same properties the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use settlesim::config::RunConfig;
use settlesim::ledger::{
    canonical_bytes, decode_block_log, decode_canonical, encode_block_log, read_chain, verify_chain,
    verify_chain_par,
};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| fs::read(e.unwrap().path()).unwrap())
        .collect();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out.sort();
    out
}

fn mutants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    for i in 0..seed.len() {
        let mut m = seed.to_vec();
        m[i] ^= 0x41;
        out.push(m);
        out.push(seed[..i].to_vec());
    }
    out
}

#[test]
fn block_log() {
    for seed in seeds("block_log") {
        for m in mutants(&seed) {
            if let Ok(records) = decode_block_log(&m) {
                let framed: usize = records.iter().map(|r| r.len() + 4).sum();
                assert_eq!(framed + 6, m.len());
            }
        }
    }
}

#[test]
fn canonical_tx() {
    for seed in seeds("canonical_tx") {
        assert!(decode_canonical(&seed).is_ok());
        for m in mutants(&seed) {
            if let Ok(tx) = decode_canonical(&m) {
                assert_eq!(canonical_bytes(&tx), m);
            }
        }
    }
}

#[test]
fn chain() {
    for seed in seeds("read_chain") {
        let mut valid = 0;
        for m in mutants(&seed) {
            let Ok(chain) = read_chain(&m, None) else { continue };
            let v = verify_chain(&chain);
            assert_eq!(v, verify_chain_par(&chain));
            assert_eq!(encode_block_log(&chain), m);
            if v.valid {
                valid += 1;
                assert!(verify_chain(&read_chain(&m, Some(chain.head())).unwrap()).valid);
            }
        }
        assert!(valid >= 1);
    }
}

#[test]
fn run_config() {
    for seed in seeds("run_config") {
        let text = String::from_utf8(seed.clone()).unwrap();
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        for m in mutants(&seed) {
            let Ok(text) = std::str::from_utf8(&m) else { continue };
            if let Ok(cfg) = RunConfig::from_json(text) {
                assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
            }
        }
    }
}
