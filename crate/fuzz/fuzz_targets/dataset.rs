#![no_main]

use cld_core::datasets::{decode_dataset, encode_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = decode_dataset(data) {
        assert_eq!(ds.data.len(), ds.n * ds.d);
        assert_eq!(encode_dataset(&ds).unwrap(), data);
    }
});
