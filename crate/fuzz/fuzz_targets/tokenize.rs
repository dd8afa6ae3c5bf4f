#![no_main]

use cmmd_core::textprep::{preprocess, tokenize, Stopwords};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let doc = preprocess(tokenize("doc", &text), &Stopwords::english());
    assert!(doc.tokens.iter().all(|t| !t.is_empty()));
});
