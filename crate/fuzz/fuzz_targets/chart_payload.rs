#![no_main]

use libfuzzer_sys::fuzz_target;
use portopt::data_client::parse_chart_payload;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = parse_chart_payload(text) {
        assert!(series.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(series.iter().all(|(_, p)| p.is_finite() && *p > 0.0));
    }
});
