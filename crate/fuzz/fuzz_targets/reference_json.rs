#![no_main]

use libfuzzer_sys::fuzz_target;
use simbundle::io::parse_reference;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_reference(text) {
        assert!(r.objective.is_finite());
        assert!(r.x.len() <= r.z.len());
        let again = serde_json::to_string(&r).unwrap();
        assert_eq!(parse_reference(&again).unwrap(), r);
    }
});
