#![no_main]

use libfuzzer_sys::fuzz_target;
use tokpress::pack::{decode_features, encode_features};

fuzz_target!(|data: &[u8]| {
    let Ok(frames) = decode_features(data) else {
        return;
    };
    assert!(!frames.is_empty());
    // compare bytes, payloads may hold NaN
    let bytes = encode_features(&frames, "fuzz").expect("decoded features do not re-encode");
    let again = decode_features(&bytes).expect("re-encoded features do not decode");
    assert_eq!(encode_features(&again, "fuzz").unwrap(), bytes);
});
