#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::corpus::segment;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let outcome = segment("TS 0.000", text);
    let records = outcome.document.to_records();
    let ids: Vec<u64> = records.iter().map(|r| r.sentence_id).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    for record in &records {
        for r in &record.references {
            assert!(r.source_span.1 <= record.text.len());
        }
    }
});
