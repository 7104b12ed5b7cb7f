#![no_main]

use libfuzzer_sys::fuzz_target;
use tokpress::pack::{decode_pack, encode_pack, read_pack};

fuzz_target!(|data: &[u8]| {
    let Ok(pack) = decode_pack(data) else {
        return;
    };
    // the streaming reader agrees with the slice decoder
    let streamed = read_pack(&mut &data[..]).expect("read_pack rejected what decode_pack accepted");
    let bytes = encode_pack(&pack);
    assert_eq!(encode_pack(&streamed), bytes);
    let again = decode_pack(&bytes).expect("re-encoded pack does not decode");
    assert_eq!(encode_pack(&again), bytes);
    assert_eq!(again.total_count(), pack.total_count());
});
