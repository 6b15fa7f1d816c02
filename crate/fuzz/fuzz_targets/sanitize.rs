#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::corpus::sanitize;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let clean = sanitize(text);
    // Idempotent, single-line, printable ASCII, no table separators left.
    assert_eq!(sanitize(&clean), clean);
    assert!(clean.chars().all(|c| (' '..='~').contains(&c)));
    assert!(!clean.contains('|'));
    assert!(!clean.contains("  "));
});
