#![no_main]

use libfuzzer_sys::fuzz_target;
use simbundle::io::parse_run_spec;
use simbundle::registry;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_run_spec(text) {
        assert!(registry::is_known(&spec.problem));
        // a spec that parses must also resolve or fail cleanly
        let _ = registry::build(&spec.problem, &spec.overrides);
    }
});
