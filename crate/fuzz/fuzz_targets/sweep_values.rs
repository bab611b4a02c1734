#![no_main]
use libfuzzer_sys::fuzz_target;
use renewal_cli::sweep::{apply_axis, parse_values, Axis};
use renewal_cli::{Algorithm, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let raw: Vec<String> = text.lines().map(str::to_string).collect();
    let Ok(values) = parse_values(&raw) else { return };
    let base = RunConfig::task_network(Algorithm::DppRatio, 10, 1.0, 1, 0);
    for v in &values {
        for axis in [Axis::V, Axis::W, Axis::Algorithm] {
            let _ = apply_axis(&base, axis, v);
        }
    }
});
