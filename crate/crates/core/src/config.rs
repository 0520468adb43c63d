//! The agent configuration file.
//!
//! ```toml
//! rules = "rules/portal.rules"        # default rule file
//!
//! [gateway]
//! kind = "mock"                       # or "http" with url = "..."
//! sink = "sms_sink.log"
//!
//! [[agents]]
//! category = "vehicles.cars"
//! index_urls = ["http://127.0.0.1:8081/vehicles.cars.html"]
//! wait_interval_secs = 900            # optional, default 900
//! timeout_ms = 10000                  # optional
//! retry_attempts = 3                  # optional
//! retry_delay_ms = 1000               # optional
//! rules = "rules/cars.rules"          # optional, overrides the default
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::fetch::RetryPolicy;
use crate::harvest::{CategoryAgentConfig, ConfigError, FetchPlan, DEFAULT_WAIT_SECS};
use crate::notify::{Gateway, HttpGateway, MockGateway};
use crate::rules::{parse_rules, RuleError, RuleSet};

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Toml { path: PathBuf, message: String },
    #[error("rule file {path}: {source}")]
    Rules { path: PathBuf, source: RuleError },
    #[error("agent {category}: no rule file given")]
    NoRules { category: String },
    #[error("agent {category}: rule file {path} has no such category")]
    UnknownCategory { category: String, path: PathBuf },
    #[error("agent {0} is configured twice")]
    DuplicateAgent(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GatewayConfig {
    Mock { sink: PathBuf },
    Http { url: String },
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig::Mock { sink: PathBuf::from("sms_sink.log") }
    }
}

impl GatewayConfig {
    pub fn build(&self) -> Box<dyn Gateway> {
        match self {
            GatewayConfig::Mock { sink } => Box::new(MockGateway::new(sink)),
            GatewayConfig::Http { url } => Box::new(HttpGateway::new(url)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    rules: Option<PathBuf>,
    #[serde(default)]
    gateway: GatewayConfig,
    #[serde(default)]
    agents: Vec<RawAgent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    category: String,
    index_urls: Vec<String>,
    wait_interval_secs: Option<u64>,
    timeout_ms: Option<u64>,
    retry_attempts: Option<u32>,
    retry_delay_ms: Option<u64>,
    rules: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub path: PathBuf,
    pub gateway: GatewayConfig,
    pub agents: Vec<CategoryAgentConfig>,
}

impl AppConfig {
    pub fn agent(&self, category: &str) -> Option<&CategoryAgentConfig> {
        self.agents.iter().find(|a| a.category == category)
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn load_rules(path: &Path) -> Result<RuleSet, ConfigLoadError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io { path: path.to_path_buf(), source })?;
    parse_rules(&text).map_err(|source| ConfigLoadError::Rules { path: path.to_path_buf(), source })
}

pub fn load_config(path: &Path) -> Result<AppConfig, ConfigLoadError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io { path: path.to_path_buf(), source })?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| ConfigLoadError::Toml { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rule_files: HashMap<PathBuf, RuleSet> = HashMap::new();
    let mut agents: Vec<CategoryAgentConfig> = Vec::new();
    for a in raw.agents {
        if agents.iter().any(|c| c.category == a.category) {
            return Err(ConfigLoadError::DuplicateAgent(a.category));
        }
        let rules_path = match a.rules.as_ref().or(raw.rules.as_ref()) {
            Some(p) => resolve(base, p),
            None => return Err(ConfigLoadError::NoRules { category: a.category }),
        };
        if !rule_files.contains_key(&rules_path) {
            let set = load_rules(&rules_path)?;
            rule_files.insert(rules_path.clone(), set);
        }
        let rule = rule_files[&rules_path]
            .get(&a.category)
            .cloned()
            .ok_or_else(|| ConfigLoadError::UnknownCategory { category: a.category.clone(), path: rules_path.clone() })?;
        let defaults = FetchPlan::default();
        let cfg = CategoryAgentConfig {
            category: a.category,
            index_urls: a.index_urls,
            rule,
            wait_interval: Duration::from_secs(a.wait_interval_secs.unwrap_or(DEFAULT_WAIT_SECS)),
            fetch_plan: FetchPlan {
                timeout_ms: a.timeout_ms.unwrap_or(defaults.timeout_ms),
                retry: RetryPolicy::bounded(
                    a.retry_attempts.unwrap_or(defaults.retry.max_attempts.unwrap_or(1)),
                    a.retry_delay_ms.unwrap_or(defaults.retry.delay_ms),
                ),
            },
        };
        cfg.validate()?;
        cfg.fetch_plan
            .expr_for("http://localhost/")
            .validate()
            .map_err(|message| ConfigLoadError::Toml { path: path.to_path_buf(), message: format!("agent {}: {message}", cfg.category) })?;
        agents.push(cfg);
    }
    let gateway = match raw.gateway {
        GatewayConfig::Mock { sink } => GatewayConfig::Mock { sink: resolve(base, &sink) },
        http => http,
    };
    Ok(AppConfig { path: path.to_path_buf(), gateway, agents })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = r#"
        category vehicles.cars { list: elem(div) title = elem(h2) }
        category electronics { list: elem(div) title = elem(h2) }
    "#;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "portal.rules", RULES);
        let cfg = write(
            dir.path(),
            "agents.toml",
            r#"
            rules = "portal.rules"
            [gateway]
            kind = "mock"
            sink = "out/sink.log"
            [[agents]]
            category = "vehicles.cars"
            index_urls = ["http://h/cars.html"]
            timeout_ms = 500
            retry_attempts = 2
            [[agents]]
            category = "electronics"
            index_urls = ["http://h/e.html"]
            wait_interval_secs = 60
            "#,
        );
        let app = load_config(&cfg).unwrap();
        assert_eq!(app.agents.len(), 2);
        let cars = app.agent("vehicles.cars").unwrap();
        assert_eq!(cars.wait_interval, Duration::from_secs(900));
        assert_eq!(cars.fetch_plan, FetchPlan { timeout_ms: 500, retry: RetryPolicy::bounded(2, 1000) });
        assert_eq!(app.agent("electronics").unwrap().wait_interval, Duration::from_secs(60));
        assert_eq!(app.gateway, GatewayConfig::Mock { sink: dir.path().join("out/sink.log") });
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "portal.rules", RULES);
        let cases = [
            ("unknown = 1", "invalid config"),
            ("[[agents]]\ncategory = \"boats\"\nindex_urls = [\"http://h/\"]\nrules = \"portal.rules\"", "no such category"),
            ("[[agents]]\ncategory = \"electronics\"\nindex_urls = [\"http://h/\"]", "no rule file"),
            ("rules = \"portal.rules\"\n[[agents]]\ncategory = \"electronics\"\nindex_urls = []", "no index urls"),
            ("rules = \"portal.rules\"\n[[agents]]\ncategory = \"electronics\"\nindex_urls = [\"u\"]\ntimeout_ms = 0", "timeout"),
            ("rules = \"missing.rules\"\n[[agents]]\ncategory = \"electronics\"\nindex_urls = [\"u\"]", "cannot read"),
        ];
        for (i, (text, needle)) in cases.iter().enumerate() {
            let cfg = write(dir.path(), &format!("c{i}.toml"), text);
            let err = load_config(&cfg).unwrap_err().to_string();
            assert!(err.contains(needle), "{text}: {err}");
        }
    }
}
