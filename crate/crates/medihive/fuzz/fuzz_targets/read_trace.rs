#![no_main]

use libfuzzer_sys::fuzz_target;
use medihive::trace::{read_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    // Trace files come from disk and may be truncated or edited by hand.
    if let Ok(snapshot) = read_trace(std::io::Cursor::new(data)) {
        // Whatever parses must round-trip identically.
        let mut buf = Vec::new();
        write_trace(&snapshot, &mut buf).unwrap();
        let reread = read_trace(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(snapshot.len(), reread.len());
        for (a, b) in snapshot.entries().iter().zip(reread.entries()) {
            assert_eq!(a.as_ref(), b.as_ref());
        }
    }
});
