#![allow(dead_code)]

use std::path::{Path, PathBuf};

use colorgpt::bench::{AppConfig, Harness};
use colorgpt::ColorDictionary;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn fixtures() -> PathBuf {
    root().join("fixtures")
}

pub fn dictionary() -> ColorDictionary {
    ColorDictionary::load_path(root().join("data/xkcd_rgb.txt")).unwrap()
}

pub fn config(name: &str) -> AppConfig {
    AppConfig::load(fixtures().join("configs").join(format!("{name}.toml"))).unwrap()
}

pub fn harness(name: &str) -> Harness {
    Harness::new(config(name)).unwrap()
}

pub fn read_json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn manifest() -> serde_json::Value {
    read_json(fixtures().join("manifest.json"))
}
