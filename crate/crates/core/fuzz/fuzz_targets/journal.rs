#![no_main]

use editscore_core::rating::read_journal;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_journal(data);
});
