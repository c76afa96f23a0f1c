#![no_main]
use dualmesh::pipeline::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = DatasetManifest::parse(text);
});
