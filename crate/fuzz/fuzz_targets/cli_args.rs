#![no_main]

use libfuzzer_sys::fuzz_target;
use simbundle::cli::{parse_args, parse_grid};

// NUL-separated argument vector; parsing only, nothing is run
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("simbundle").chain(text.split('\0'));
    let _ = parse_args(args);
    if let Ok(points) = parse_grid(text) {
        assert!(!points.is_empty());
    }
});
