#![no_main]

use libfuzzer_sys::fuzz_target;
use vault_core::signal::{validate_signal, Signal, SignalMode};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(signal) = Signal::from_json(text) {
        for mode in [SignalMode::Discrete { buttons: 2 }, SignalMode::Continuous { dim: 2 }] {
            let _ = validate_signal(&signal, mode);
        }
        let back = Signal::from_json(&signal.to_json()).expect("serialized signal parses");
        // NaN cannot come out of JSON, so equality holds
        assert_eq!(back, signal);
    }
});
