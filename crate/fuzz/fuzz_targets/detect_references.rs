#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::corpus::detect_references;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let refs = detect_references(text);
    let mut last_end = 0usize;
    for r in &refs {
        let (start, end) = r.source_span;
        assert!(start < end && end <= text.len());
        assert!(start >= last_end, "overlapping spans");
        last_end = end;
    }
});
