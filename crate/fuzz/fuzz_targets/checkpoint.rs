#![no_main]
use dualmesh::convnet::checkpoint::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&net);
        let again = decode_checkpoint(&bytes).expect("re-decode");
        assert_eq!(encode_checkpoint(&again), bytes);
    }
});
