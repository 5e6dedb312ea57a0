#![no_main]

use libfuzzer_sys::fuzz_target;
use protomut::protocol::maxip;

fuzz_target!(|data: &[u8]| {
    let p = maxip();
    if let Ok(frames) = p.decode(data) {
        let bytes = p.encode(&frames).expect("decoded frames encode");
        assert_eq!(p.decode(&bytes).unwrap(), frames);
    }
    let _ = p.subjects(data);
});
