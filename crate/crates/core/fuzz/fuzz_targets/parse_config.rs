#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(config) = lrgame::config::parse_config(data) {
        // anything accepted must describe a buildable window and edge law
        let _ = config.edge_params();
        let _ = lrgame::harness::build_window(&config, config.side).expect("validated window");
    }
});
