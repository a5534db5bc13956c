#![no_main]

use editscore_core::dataset::{decode_rgb, resize_shorter_side};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_rgb(data) {
        if img.width() <= 256 && img.height() <= 256 {
            let _ = resize_shorter_side(&img, 16);
        }
    }
});
