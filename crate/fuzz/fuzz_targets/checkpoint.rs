#![no_main]

use cld_core::score_net::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data) {
        // anything accepted must re-encode to the same bytes
        assert_eq!(encode_checkpoint(&ck), data);
    }
});
