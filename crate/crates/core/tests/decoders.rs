//! Decoders must return errors, never panic, on arbitrary input. The checked-in
//! fuzz corpus doubles as a set of known-good inputs.

use std::path::Path;

use cld_core::config::RunConfig;
use cld_core::datasets::{decode_dataset, encode_dataset, load_dataset, save_dataset, Dataset};
use cld_core::score_net::{decode_checkpoint, encode_checkpoint};
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = std::fs::read_dir(dir).unwrap().map(|e| std::fs::read(e.unwrap().path()).unwrap()).collect();
    out.sort();
    out
}

#[test]
fn corpus_seeds_decode_and_reencode() {
    for b in corpus("checkpoint") {
        assert_eq!(encode_checkpoint(&decode_checkpoint(&b).unwrap()), b);
    }
    for b in corpus("dataset") {
        assert_eq!(encode_dataset(&decode_dataset(&b).unwrap()).unwrap(), b);
    }
    for b in corpus("config") {
        RunConfig::parse(std::str::from_utf8(&b).unwrap()).unwrap();
    }
}

#[test]
fn dataset_file_round_trip() {
    let ds = Dataset::new(3, 2, vec![0.5, -1.25, 3.0, 0.0, 1e-3, 7.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.clds");
    save_dataset(&path, &ds).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!((back.n, back.d), (3, 2));
    for (a, b) in back.data.iter().zip(&ds.data) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn huge_declared_lengths_fail_fast() {
    let mut b = b"CLDS".to_vec();
    b.extend_from_slice(&1u32.to_le_bytes());
    b.extend_from_slice(&u32::MAX.to_le_bytes());
    b.extend_from_slice(&u32::MAX.to_le_bytes());
    assert!(decode_dataset(&b).is_err());
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_checkpoint(&bytes);
        let _ = decode_dataset(&bytes);
        if let Ok(s) = std::str::from_utf8(&bytes) {
            let _ = RunConfig::parse(s);
        }
    }

    #[test]
    fn mutated_seeds_never_panic(which in 0usize..4, pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut seeds = corpus("checkpoint");
        seeds.extend(corpus("dataset"));
        let mut b = seeds[which].clone();
        let i = pos.index(b.len());
        b[i] = byte;
        if let Ok(ck) = decode_checkpoint(&b) {
            prop_assert_eq!(encode_checkpoint(&ck), b.clone());
        }
        if let Ok(ds) = decode_dataset(&b) {
            prop_assert_eq!(encode_dataset(&ds).unwrap(), b.clone());
        }
        let cut = pos.index(b.len());
        let _ = decode_checkpoint(&b[..cut]);
        let _ = decode_dataset(&b[..cut]);
    }
}
