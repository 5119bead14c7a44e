//! Shared fixtures for the pta-core benchmarks.

use std::path::{Path, PathBuf};

use pta_core::session::{parse_trace, SessionAssets, SessionConfig};
use pta_core::{parse_fcm, FcmModel, Trace};

pub fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets").join(rel)
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(asset(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn bundled_fcm() -> FcmModel {
    parse_fcm(&read("fcm/pta_fcm.json")).expect("bundled fcm")
}

pub fn config() -> SessionConfig {
    SessionConfig::load(&asset("config/session.toml")).expect("bundled config")
}

pub fn assets() -> SessionAssets {
    SessionAssets::load(&config()).expect("bundled assets")
}

pub fn trace(name: &str) -> Trace {
    parse_trace(&read(&format!("traces/{name}.json"))).expect("bundled trace")
}
