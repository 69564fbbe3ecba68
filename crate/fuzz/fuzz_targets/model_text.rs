#![no_main]

use libfuzzer_sys::fuzz_target;
use portopt::autoencoder::{model_from_text, model_to_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok((model, config)) = model_from_text(text) else {
        return;
    };
    let (again, config2) = model_from_text(&model_to_text(&model, &config)).expect("serialized model parses");
    assert_eq!(config2, config);
    // NaN never equals itself, so compare the text form
    assert_eq!(model_to_text(&again, &config2), model_to_text(&model, &config));
});
