#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    avfusion::fuzzing::run("raw_frames", data);
});
