#![no_main]

use libfuzzer_sys::fuzz_target;
use vault_core::log::replay_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let loose = replay_str(text, false);
    if let Ok(strict) = replay_str(text, true) {
        let loose = loose.expect("a log that verifies also replays");
        assert_eq!(strict.session.state_hash(), loose.session.state_hash());
    }
});
