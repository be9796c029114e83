#![no_main]

use libfuzzer_sys::fuzz_target;
use memkern::config::{parse_config_text, Command};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config_text(s, Command::Simulate) {
        let text = cfg.to_text();
        let again = parse_config_text(&text, Command::Simulate).expect("canonical text parses");
        assert_eq!(again.to_text(), text);
    }
});
