#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::sca::{canonicalize, ScaNode};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(node) = serde_json::from_str::<ScaNode>(text) {
        // Canonical forms are rebuilt on deserialization and never drift.
        assert_eq!(node.start_state.canonical(), canonicalize(node.start_state.raw()));
        assert_eq!(node.end_state.canonical(), canonicalize(node.end_state.raw()));
    }
});
