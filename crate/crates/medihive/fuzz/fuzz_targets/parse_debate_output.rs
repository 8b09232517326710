#![no_main]

use libfuzzer_sys::fuzz_target;
use medihive::llm_backend::{parse_debate_output, parse_role_output};
use medihive::memory_pool::DebateKind;

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    if let Ok(argument) = parse_debate_output(&raw, &[0, 1, 2, 3]) {
        // Rebuttals carry an in-range target; other kinds carry none.
        match argument.kind {
            DebateKind::Rebuttal => assert!(matches!(argument.target, Some(0..=3))),
            _ => assert!(argument.target.is_none()),
        }
    }
    // Role parsing is lenient and total.
    let (role, _) = parse_role_output(&raw);
    assert!(!role.is_empty());
});
