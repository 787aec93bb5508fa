#![no_main]

use libfuzzer_sys::fuzz_target;
use vault_core::signal::MeaningLabel;
use vault_core::DisplayPattern;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pattern) = DisplayPattern::from_json(text) {
        let a = pattern.digits_with(MeaningLabel::A).len();
        let b = pattern.digits_with(MeaningLabel::B).len();
        assert_eq!(a + b, pattern.symbols());
        assert_eq!(DisplayPattern::from_json(&pattern.to_json()).unwrap(), pattern);
        assert_eq!(pattern.complement().complement(), pattern);
    }
});
