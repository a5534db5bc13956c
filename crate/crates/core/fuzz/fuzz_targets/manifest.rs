#![no_main]

use editscore_core::dataset::{manifest_to_string, parse_manifest, validate_caseset, CaseSet, DatasetMetadata};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((header, cases)) = parse_manifest(text) {
        let meta = DatasetMetadata { name: header.name, version: header.version, created: header.created };
        let cs = CaseSet::new(meta, cases).with_methods(header.methods);
        let _ = validate_caseset(&cs);
        // Whatever parsed must survive a write/parse cycle.
        let again = parse_manifest(&manifest_to_string(&cs)).expect("re-parse of written manifest");
        assert_eq!(again.1.len(), cs.len());
    }
});
