#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use resilchk::calculus::{canonicalize, parse_model, parse_process, Model};

const HEADER: &str = "domain {v, w, 0..3}\nchannel a, b, c\nlocation l1, l2\ndef P(x) = a!x.P(x)\n";

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| parse_model(HEADER).expect("fixed header parses"))
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let m = model();
    if let Ok(p) = parse_process(m, text) {
        let again = parse_process(m, &p.to_string()).expect("printed process reparses");
        if let (Ok(x), Ok(y)) = (canonicalize(m, &p), canonicalize(m, &again)) {
            assert_eq!(x, y);
        }
    }
});
