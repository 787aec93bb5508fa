//! Runs the checked-in fuzz corpus through the service-side parsers.

use std::path::{Path, PathBuf};

use vault_service::{CreateRequest, ServiceConfig};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn config_seeds() {
    let mut valid = Vec::new();
    for (name, bytes) in seeds("parse_config") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(config) = ServiceConfig::from_toml_str(&text, Path::new(&name)) {
            if config.validate().is_ok() {
                valid.push(name);
            }
        }
    }
    assert_eq!(valid, ["empty.toml", "fixed_seed.toml", "full.toml"]);
}

#[test]
fn create_request_seeds() {
    let parsed: Vec<String> = seeds("client_message")
        .into_iter()
        .filter(|(_, bytes)| serde_json::from_slice::<CreateRequest>(bytes).is_ok())
        .map(|(name, _)| name)
        .collect();
    // level 3 parses; it is rejected later as invalid_level
    assert_eq!(parsed, ["bad_level", "level1", "level4_seeded", "level5_reveal"]);
}
