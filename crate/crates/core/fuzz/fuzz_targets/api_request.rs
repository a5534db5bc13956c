#![no_main]

use std::sync::{Arc, OnceLock};

use editscore_core::rating::{handle_request, ManualClock, RatingService};
use editscore_core::synth::synth_dataset;
use libfuzzer_sys::fuzz_target;

const METHODS: [&str; 4] = ["GET", "POST", "PUT", "DELETE"];

fn service() -> &'static (RatingService, ManualClock) {
    static SVC: OnceLock<(RatingService, ManualClock)> = OnceLock::new();
    SVC.get_or_init(|| {
        let ds = synth_dataset(4, 8, 0);
        let clock = ManualClock::new(0);
        let svc = RatingService::new(&ds.cases, ["r1", "r2"], Arc::new(clock.clone())).unwrap();
        (svc, clock)
    })
}

// First byte picks the method and clock step, then `path \n body`.
fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else { return };
    let (svc, clock) = service();
    clock.advance(u64::from(head >> 2) * 250);
    let split = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    let Ok(path) = std::str::from_utf8(&rest[..split]) else { return };
    let body = rest.get(split + 1..).unwrap_or(&[]);
    let resp = handle_request(svc, METHODS[usize::from(head & 3)], path, body);
    assert!((200..600).contains(&resp.status));
});
