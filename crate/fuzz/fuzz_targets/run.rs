#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(run) = intentdiv::formats::parse_run(text) {
            let _ = run.rankings();
        }
    }
});
