#![no_main]

use libfuzzer_sys::fuzz_target;
use portopt::market_data::{daily_returns, parse_price_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(panel) = parse_price_csv(text) else { return };
    let again = parse_price_csv(&panel.to_csv()).expect("serialized panel parses");
    assert_eq!(again, panel);
    let _ = daily_returns(&panel);
});
