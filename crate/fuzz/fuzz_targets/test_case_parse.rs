#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::vulntester::{parse_structured, render, RenderFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(case) = parse_structured(text) {
        let rendered = render(&case, RenderFormat::Structured);
        assert_eq!(parse_structured(&rendered).unwrap(), case);
    }
});
