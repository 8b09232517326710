#![no_main]

use libfuzzer_sys::fuzz_target;
use medihive::llm_backend::parse_agent_output;
use medihive::AnswerDomain;

fuzz_target!(|data: &[u8]| {
    // Model output is untrusted text; the parser must return a well-formed
    // output or a typed error, never panic.
    let raw = String::from_utf8_lossy(data);
    for domain in [AnswerDomain::letters(5), AnswerDomain::yes_no_maybe()] {
        if let Ok(output) = parse_agent_output(&raw, &domain) {
            let confidence = output.confidence.value();
            assert!((0.0..=1.0).contains(&confidence));
            assert!(output.answer.is_valid());
        }
    }
});
