#![no_main]

use editscore_core::subjective::{parse_mos_rows, MosTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_mos_rows(data) else { return };
    if let Ok(table) = MosTable::from_rows(&rows) {
        for dim in table.dims().to_vec() {
            let _ = table.rescale_map(&dim, 0.0, 10.0);
        }
        let mut out = Vec::new();
        table.write_csv(&mut out).expect("write mos csv");
    }
});
