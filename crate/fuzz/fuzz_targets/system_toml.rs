#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(spec) = carleman::io::parse_system_toml(data) {
        let _ = spec.build();
    }
});
