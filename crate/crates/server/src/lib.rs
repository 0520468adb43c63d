//! Service host for adwatch: the JSON API, the per-category agent host and
//! the one-shot pipeline used by the command line.

pub mod api;
pub mod host;

use adwatch_core::clock::Clock;
use adwatch_core::config::AppConfig;
use adwatch_core::fetch::{execute, Transport};
use adwatch_core::harvest::{harvest_category, ConfigError, FetchPlan, HarvestReport};
use adwatch_core::notify::{analyze_new, dispatch_pending, AnalysisOutcome, DispatchReport, Gateway};
use adwatch_core::rules::{extract_records, nsl_to_advert, CategoryRule};
use adwatch_core::store::{Datastore, StoreError};
use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("no agent configured for category {0}")]
    UnknownCategory(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("fetch {url}: {reason}")]
    Fetch { url: String, reason: String },
    #[error("extract: {0}")]
    Extract(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOnceReport {
    pub harvest: Vec<HarvestReport>,
    pub analysis: AnalysisOutcome,
    pub dispatch: DispatchReport,
}

/// One harvest of the chosen category (every configured one when `None`),
/// then one analysis and one dispatch pass.
pub async fn run_once(
    config: &AppConfig,
    category: Option<&str>,
    store: &Datastore,
    transport: &dyn Transport,
    clock: &dyn Clock,
    gateway: &dyn Gateway,
) -> Result<RunOnceReport, RunError> {
    let agents: Vec<_> = match category {
        Some(name) => vec![config.agent(name).ok_or_else(|| RunError::UnknownCategory(name.to_string()))?],
        None => config.agents.iter().collect(),
    };
    let mut harvest = Vec::new();
    for agent in agents {
        harvest.push(harvest_category(agent, transport, store, clock).await?);
    }
    let analysis = analyze_new(store, store.high_water(), clock.now())?;
    let dispatch = dispatch_pending(store, gateway).await?;
    Ok(RunOnceReport { harvest, analysis, dispatch })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractedRecord {
    pub category: String,
    pub fields: IndexMap<String, String>,
    pub source_url: String,
    pub content_hash: String,
}

/// Fetches `url` and applies `rule` as of `today`, touching no store.
pub async fn extract_url(
    url: &str,
    rule: &CategoryRule,
    today: NaiveDate,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<Vec<ExtractedRecord>, RunError> {
    let fetched = execute(&FetchPlan::default().expr_for(url), transport)
        .await
        .map_err(|e| RunError::Fetch { url: url.to_string(), reason: e.to_string() })?;
    let records = extract_records(&fetched.page, rule, today).map_err(|e| RunError::Extract(e.to_string()))?;
    records
        .iter()
        .map(|nsl| {
            let advert = nsl_to_advert(nsl, rule, url, clock.now()).map_err(|e| RunError::Extract(e.to_string()))?;
            Ok(ExtractedRecord {
                category: advert.category,
                fields: advert.fields,
                source_url: advert.source_url,
                content_hash: advert.content_hash,
            })
        })
        .collect()
}
