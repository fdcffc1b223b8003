#![no_main]

use isac_opt::mps;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = mps::parse_mps(text) {
        // Whatever parses must survive a write/parse cycle unchanged.
        let again = mps::write_mps(&model);
        let back = mps::parse_mps(&again).expect("writer output parses");
        assert_eq!(mps::write_mps(&back), again);
    }
});
