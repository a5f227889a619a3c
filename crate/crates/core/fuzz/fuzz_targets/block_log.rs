#![no_main]

use libfuzzer_sys::fuzz_target;
use settlesim::ledger::decode_block_log;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = decode_block_log(data) {
        // framing: 6 byte preamble plus a 4 byte length per record
        let framed: usize = records.iter().map(|r| r.len() + 4).sum();
        assert_eq!(framed + 6, data.len());
    }
});
