#![allow(dead_code)]

pub mod checks;
pub mod gen;
pub mod oracle;

use std::path::{Path, PathBuf};

use pta_core::session::{parse_trace, replay, Session, SessionAssets, SessionConfig, SessionParams};
use pta_core::{FcmModel, KnowledgeBase};

pub fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join(rel)
}

pub fn read_asset(rel: &str) -> String {
    std::fs::read_to_string(asset(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn config() -> SessionConfig {
    SessionConfig::load(&asset("config/session.toml")).expect("bundled config")
}

pub fn assets() -> SessionAssets {
    SessionAssets::load(&config()).expect("bundled assets")
}

pub fn pta_fcm() -> FcmModel {
    pta_core::parse_fcm(&read_asset("fcm/pta_fcm.json")).expect("bundled fcm")
}

pub fn pta_kb() -> KnowledgeBase {
    pta_core::load_kb(&read_asset("kb/diffusion_osmosis.json")).expect("bundled kb")
}

pub fn run_case(name: &str) -> Session {
    let trace = parse_trace(&read_asset(&format!("traces/{name}.json"))).expect("bundled trace");
    let config = config();
    replay(assets(), SessionParams::from(&config), &trace).expect("trace replays")
}
