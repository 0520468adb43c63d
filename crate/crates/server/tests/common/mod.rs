#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

pub const RULES: &str = include_str!("../../../../config/portal.rules");
pub const CATEGORIES: [&str; 3] = ["vehicles.cars", "property.rent", "electronics"];

/// Writes the portal rules and an agent config pointing at `base_url`.
pub fn write_config(dir: &Path, base_url: &str) -> PathBuf {
    std::fs::write(dir.join("portal.rules"), RULES).unwrap();
    let mut text = String::from("rules = \"portal.rules\"\n\n[gateway]\nkind = \"mock\"\nsink = \"sink.log\"\n");
    for c in CATEGORIES {
        text.push_str(&format!(
            "\n[[agents]]\ncategory = \"{c}\"\nindex_urls = [\"{base_url}/{c}.html\"]\ntimeout_ms = 5000\nretry_attempts = 2\nretry_delay_ms = 50\n"
        ));
    }
    let path = dir.join("agents.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn sink_lines(dir: &Path) -> usize {
    std::fs::read_to_string(dir.join("sink.log")).map(|s| s.lines().count()).unwrap_or(0)
}

/// Runs the binary on a blocking thread so an in-process portal keeps
/// serving meanwhile.
pub async fn adwatch(args: Vec<String>, envs: Vec<(String, String)>) -> Output {
    tokio::task::spawn_blocking(move || {
        std::process::Command::new(env!("CARGO_BIN_EXE_adwatch"))
            .args(&args)
            .envs(envs)
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    })
    .await
    .unwrap()
}

pub fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}
