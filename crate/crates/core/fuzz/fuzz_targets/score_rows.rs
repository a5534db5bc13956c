#![no_main]

use editscore_core::subjective::{aggregate_mos, bt500_screen, parse_score_rows, zscore_normalize, ScoreMatrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_score_rows(data) else { return };
    let Ok(sm) = ScoreMatrix::from_rows(&rows) else { return };
    let Ok(zm) = zscore_normalize(&sm) else { return };
    if let Ok(rep) = bt500_screen(&zm) {
        let _ = aggregate_mos(&zm, &rep.kept);
    }
});
