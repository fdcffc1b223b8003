#![no_main]

use isac_opt::cli;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = cli::parse_config(text) {
        let again = serde_json::to_string(&cfg).expect("config serializes");
        assert_eq!(cli::parse_config(&again).expect("round trip"), cfg);
    }
});
