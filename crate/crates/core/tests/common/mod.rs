#![allow(dead_code)]

use std::path::PathBuf;

use sidsense::paws::wire;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/paws")
}

/// Decodes every golden vector and re-encodes it; returns (file, ok) pairs.
pub fn golden_round_trips() -> Vec<(String, bool)> {
    let mut files: Vec<_> = std::fs::read_dir(golden_dir())
        .expect("golden dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|path| {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = std::fs::read(&path).expect("read golden");
            let again = if name.starts_with("request_") {
                wire::decode_call(&bytes).ok().map(|c| wire::encode_call(&c))
            } else {
                wire::decode_response(&bytes).ok().map(|r| wire::encode_response(&r))
            };
            (name, again.as_deref() == Some(&bytes[..]))
        })
        .collect()
}
