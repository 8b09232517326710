#![no_main]

use libfuzzer_sys::fuzz_target;
use medihive::datasets::parse_medqa_line;

fuzz_target!(|data: &[u8]| {
    let line = String::from_utf8_lossy(data);
    if let Ok(instance) = parse_medqa_line(&line, 1) {
        assert!((3..=5).contains(&instance.labels.len()));
        if let Some(gold) = &instance.gold {
            assert!(instance.labels.contains(gold.as_label().unwrap()));
        }
    }
});
