#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::sca::canonicalize;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let once = canonicalize(text);
    assert_eq!(canonicalize(&once), once);
});
