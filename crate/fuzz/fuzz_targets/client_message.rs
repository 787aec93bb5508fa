#![no_main]

use libfuzzer_sys::fuzz_target;
use vault_service::CreateRequest;

// Bodies accepted on POST /api/session; signals share the parse_signal target.
fuzz_target!(|data: &[u8]| {
    if let Ok(request) = serde_json::from_slice::<CreateRequest>(data) {
        let text = serde_json::to_string(&request).unwrap();
        assert_eq!(serde_json::from_str::<CreateRequest>(&text).unwrap(), request);
    }
});
