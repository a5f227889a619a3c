#![no_main]

use libfuzzer_sys::fuzz_target;
use settlesim::ledger::{canonical_bytes, decode_canonical};

fuzz_target!(|data: &[u8]| {
    if let Ok(tx) = decode_canonical(data) {
        // the encoding is canonical, so anything accepted re-encodes exactly
        assert_eq!(canonical_bytes(&tx), data);
    }
});
