#![no_main]
use libfuzzer_sys::fuzz_target;
use renewal_cli::config::Verbosity;
use renewal_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut cfg) = RunConfig::from_json(text) else { return };
    // Any accepted configuration must run without panicking; keep it short.
    cfg.frames = cfg.frames.min(20);
    cfg.w = cfg.w.min(16);
    cfg.checkpoints = None;
    cfg.outputs.verbosity = Verbosity::Frames;
    let mut sink = Vec::new();
    let _ = renewal_cli::run(&cfg, Some(&mut sink));
});
