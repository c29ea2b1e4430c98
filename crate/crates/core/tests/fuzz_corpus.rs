//! Replays the checked-in fuzz corpus through the fuzz targets' invariants.

use std::fs;
use std::path::PathBuf;

use resilchk::calculus::{canonicalize, parse_model, parse_process};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seeds: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty());
    seeds
}

#[test]
fn model_seeds_reparse() {
    let mut accepted = 0;
    for (name, text) in corpus("parse_model") {
        if let Ok(m) = parse_model(&text) {
            accepted += 1;
            for (sys, p) in &m.systems {
                parse_process(&m, &p.to_string()).unwrap_or_else(|e| panic!("{name}/{sys}: {e}"));
            }
        }
    }
    assert!(accepted >= 4);
}

#[test]
fn process_seeds_round_trip() {
    let m = parse_model("domain {v, w, 0..3}\nchannel a, b, c\nlocation l1, l2\ndef P(x) = a!x.P(x)\n").unwrap();
    let mut accepted = 0;
    for (name, text) in corpus("parse_process") {
        if let Ok(p) = parse_process(&m, &text) {
            accepted += 1;
            let again = parse_process(&m, &p.to_string()).unwrap_or_else(|e| panic!("{name}: {e}"));
            if let (Ok(x), Ok(y)) = (canonicalize(&m, &p), canonicalize(&m, &again)) {
                assert_eq!(x, y, "{name}");
            }
        }
    }
    assert!(accepted >= 5, "only {accepted} process seeds parse");
}
