#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Goal: never panic on malformed per-frame logs.
    let _ = renewal_cli::summary_from_csv(data);
});
