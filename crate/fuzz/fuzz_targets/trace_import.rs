#![no_main]

use libfuzzer_sys::fuzz_target;
use protomut::trace::Trace;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Trace::import(s) {
        assert_eq!(Trace::import(&t.export()).unwrap(), t);
    }
});
