#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use vault_service::ServiceConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ServiceConfig::from_toml_str(text, Path::new("fuzz.toml")) {
        let _ = config.validate();
    }
});
