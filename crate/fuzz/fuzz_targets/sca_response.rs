#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::sca::parse_sca_response;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(Some(raw)) = parse_sca_response(text) {
        for field in [&raw.start, &raw.condition, &raw.action, &raw.end] {
            assert!(!field.trim().is_empty());
        }
    }
});
