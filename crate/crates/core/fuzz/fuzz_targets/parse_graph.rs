#![no_main]

use libfuzzer_sys::fuzz_target;
use lrgame::format::{parse_graph, write_graph};

fuzz_target!(|data: &str| {
    if let Ok(file) = parse_graph(data) {
        let text = write_graph(&file.graph, &file.feelings, file.spins.as_ref());
        let again = parse_graph(&text).expect("written graphs parse");
        assert_eq!(again, file);
    }
});
