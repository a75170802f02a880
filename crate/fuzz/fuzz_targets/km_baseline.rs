#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(km) = carleman::io::parse_km_baseline(s) {
            // Accepted baselines must survive a round trip.
            let again = carleman::io::parse_km_baseline(&carleman::io::km_baseline_json(&km)).expect("round trip");
            assert_eq!(again, km);
        }
    }
});
