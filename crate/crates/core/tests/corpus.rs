//! Every checked-in fuzz seed goes through its parser.

use std::fs;
use std::path::PathBuf;

use lrgame::config::parse_config;
use lrgame::format::{parse_graph, write_graph};
use lrgame::harness::build_window;

const REJECTED: [&str; 3] = [
    "duplicate_key.toml",
    "small_gamma.toml",
    "missing_edges.txt",
];

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn config_seeds() {
    for (name, text) in seeds("parse_config") {
        match parse_config(&text) {
            Ok(c) => {
                assert!(
                    !REJECTED.contains(&name.as_str()),
                    "{name} should be rejected"
                );
                build_window(&c, c.side).unwrap();
            }
            Err(e) => assert!(REJECTED.contains(&name.as_str()), "{name}: {e}"),
        }
    }
}

#[test]
fn graph_seeds() {
    for (name, text) in seeds("parse_graph") {
        match parse_graph(&text) {
            Ok(g) => {
                assert!(
                    !REJECTED.contains(&name.as_str()),
                    "{name} should be rejected"
                );
                let again =
                    parse_graph(&write_graph(&g.graph, &g.feelings, g.spins.as_ref())).unwrap();
                assert_eq!(again, g, "{name}");
            }
            Err(e) => assert!(REJECTED.contains(&name.as_str()), "{name}: {e}"),
        }
    }
}
