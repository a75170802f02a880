#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(spec) = carleman::io::parse_system_json(data) {
        let _ = spec.build();
    }
});
