#![no_main]

use libfuzzer_sys::fuzz_target;
use tokpress::budget::plan;
use tokpress::cli::commands::Settings;
use tokpress::cli::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(overrides) = parse_config(text) else {
        return;
    };
    let settings = Settings::resolve(overrides);
    let config = settings.config(settings.n_frames);
    // validation and planning report errors, never panic
    let _ = plan(&config);
    if let Ok(valid) = config.validate() {
        let _ = valid.sampled_tokens();
    }
});
