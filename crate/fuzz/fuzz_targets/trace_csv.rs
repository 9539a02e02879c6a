#![no_main]

use libfuzzer_sys::fuzz_target;
use simbundle::io::{read_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_trace(data) {
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
    }
});
