#![no_main]

use libfuzzer_sys::fuzz_target;
use protomut::minip::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode(data) {
        // anything that decodes must re-encode to the same bytes
        let again = encode(&p).expect("decoded packet encodes");
        assert_eq!(decode(&again).unwrap(), p);
    }
});
