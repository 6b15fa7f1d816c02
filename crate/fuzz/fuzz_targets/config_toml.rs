#![no_main]

use libfuzzer_sys::fuzz_target;
use scachain::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = toml::from_str::<PipelineConfig>(text) {
        let _ = config.validate();
    }
});
