//! The files in `fixtures/` are exactly what the generators produce.
//! Run with `CATMIN_BLESS=1` to rewrite them.

use std::path::PathBuf;

use catmin::io::{fixtures, parse_instance};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn fixtures_match_generators() {
    let bless = std::env::var_os("CATMIN_BLESS").is_some();
    for (name, inst) in fixtures::all() {
        let path = dir().join(name);
        let text = inst.to_json();
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(on_disk == text, "{name} differs from its generator");
    }
}

#[test]
fn fixtures_roundtrip() {
    for (name, _) in fixtures::all() {
        let text = std::fs::read_to_string(dir().join(name)).unwrap();
        let inst = parse_instance(&text).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        assert_eq!(inst.to_json(), text, "{name}");
        assert_eq!(parse_instance(&inst.to_json()).unwrap(), inst, "{name}");
    }
}
