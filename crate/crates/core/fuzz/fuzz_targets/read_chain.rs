#![no_main]

use libfuzzer_sys::fuzz_target;
use settlesim::ledger::{encode_block_log, read_chain, verify_chain, verify_chain_par};

fuzz_target!(|data: &[u8]| {
    let Ok(chain) = read_chain(data, None) else { return };
    let v = verify_chain(&chain);
    assert_eq!(v, verify_chain_par(&chain));
    assert_eq!(encode_block_log(&chain), data);
    if v.valid {
        let anchored = read_chain(data, Some(chain.head())).unwrap();
        assert!(verify_chain(&anchored).valid);
    }
});
