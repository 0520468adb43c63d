//! The per-category web agent: walk the index pages, keep the ad links
//! posted today, extract and store the adverts they lead to, then wait.

use std::collections::HashSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, watch};

use crate::algebra;
use crate::clock::Clock;
use crate::datefmt::{format_date, DateFormatError};
use crate::fetch::{execute, RetryPolicy, ServiceExpr, Transport};
use crate::html::{NodeKind, Page, Span};
use crate::piece::Scope;
use crate::rules::{extract_records, nsl_to_advert, CategoryRule};
use crate::store::Datastore;

pub const DEFAULT_WAIT_SECS: u64 = 900;
/// How far past an anchor's end a date may sit when the anchor has no
/// enclosing row, item, paragraph or div.
pub const DATE_WINDOW_CHARS: usize = 200;
const DATE_CONTAINERS: [&str; 4] = ["tr", "li", "p", "div"];

/// How each page is fetched: `Retry(Timeout(timeout_ms, Get(url)), retry)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchPlan {
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for FetchPlan {
    fn default() -> Self {
        FetchPlan { timeout_ms: 10_000, retry: RetryPolicy::bounded(3, 1000) }
    }
}

impl FetchPlan {
    pub fn expr_for(&self, url: &str) -> ServiceExpr {
        ServiceExpr::get(url).timeout(self.timeout_ms).retry(self.retry)
    }
}

#[derive(Debug, Clone)]
pub struct CategoryAgentConfig {
    pub category: String,
    pub index_urls: Vec<String>,
    pub rule: CategoryRule,
    pub wait_interval: Duration,
    pub fetch_plan: FetchPlan,
}

impl CategoryAgentConfig {
    pub fn new(rule: CategoryRule, index_urls: Vec<String>) -> Self {
        CategoryAgentConfig {
            category: rule.name.clone(),
            index_urls,
            rule,
            wait_interval: Duration::from_secs(DEFAULT_WAIT_SECS),
            fetch_plan: FetchPlan::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rule.name != self.category {
            return Err(ConfigError::RuleMismatch { category: self.category.clone(), rule: self.rule.name.clone() });
        }
        if self.index_urls.is_empty() {
            return Err(ConfigError::NoIndexUrls(self.category.clone()));
        }
        if self.wait_interval.is_zero() {
            return Err(ConfigError::ZeroWait(self.category.clone()));
        }
        format_date(&self.rule.date_format, chrono::NaiveDate::MIN)
            .map_err(|source| ConfigError::DateFormat { category: self.category.clone(), source })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("category {category} is configured with the rule for {rule}")]
    RuleMismatch { category: String, rule: String },
    #[error("category {0} has no index urls")]
    NoIndexUrls(String),
    #[error("category {0} has a zero wait interval")]
    ZeroWait(String),
    #[error("category {category}: {source}")]
    DateFormat { category: String, source: DateFormatError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlError {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestReport {
    pub category: String,
    pub links_visited: usize,
    pub links_matched_today: usize,
    pub records_extracted: usize,
    pub records_new: usize,
    pub records_duplicate: usize,
    pub errors: Vec<UrlError>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentState {
    Stopped,
    Running,
    Waiting,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub category: String,
    pub state: AgentState,
    pub last_report: Option<HarvestReport>,
    pub next_run_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AgentStatus {
    pub fn stopped(category: &str) -> Self {
        AgentStatus { category: category.to_string(), state: AgentState::Stopped, last_report: None, next_run_at: None, error: None }
    }
}

/// The current date in `format`, regex-escaped.
pub fn today_pattern(format: &str, clock: &dyn Clock) -> Result<String, DateFormatError> {
    Ok(regex::escape(&format_date(format, clock.today())?))
}

/// Absolute targets of the anchors on `page` that carry a match of
/// `date_pattern` nearby, in document order and without repeats.
///
/// An anchor qualifies when a match lies inside its nearest enclosing
/// `tr`, `li`, `p` or `div`; without such an ancestor, when a match starts
/// at or after the anchor's end and ends within [`DATE_WINDOW_CHARS`].
pub fn dated_links(page: &Page, date_pattern: &str) -> Result<Vec<String>, algebra::AlgebraError> {
    let dates: Vec<Span> = algebra::pat(Scope::Page(page), date_pattern)?.spans();
    let base = url::Url::parse(page.url()).ok();
    let mut seen = HashSet::new();
    let mut links = Vec::new();
    for node in page.nodes() {
        if node.kind != NodeKind::Element || node.name != "a" {
            continue;
        }
        let Some(href) = node.attr("href") else { continue };
        let mut container = node.parent;
        while let Some(id) = container {
            let n = page.node(id);
            if n.kind == NodeKind::Element && DATE_CONTAINERS.contains(&n.name.as_str()) {
                break;
            }
            container = n.parent;
        }
        let qualifies = match container {
            Some(id) => {
                let region = page.node(id).span;
                dates.iter().any(|d| region.contains(d))
            }
            None => {
                let end = node.span.end;
                dates.iter().any(|d| d.start >= end && d.end <= end + DATE_WINDOW_CHARS)
            }
        };
        if !qualifies {
            continue;
        }
        let target = match &base {
            Some(base) => match base.join(href.trim()) {
                Ok(u) => u.to_string(),
                Err(_) => continue,
            },
            None => href.trim().to_string(),
        };
        if seen.insert(target.clone()) {
            links.push(target);
        }
    }
    Ok(links)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractCounts {
    pub new: usize,
    pub duplicate: usize,
}

/// Fetches one ad page, extracts its records and stores those not seen
/// before. Records whose fields are all empty are dropped.
pub async fn extract_latest(
    link: &str,
    cfg: &CategoryAgentConfig,
    transport: &dyn Transport,
    store: &Datastore,
    clock: &dyn Clock,
) -> Result<ExtractCounts, String> {
    let fetched = execute(&cfg.fetch_plan.expr_for(link), transport).await.map_err(|e| e.to_string())?;
    let records = extract_records(&fetched.page, &cfg.rule, clock.today()).map_err(|e| e.to_string())?;
    let mut counts = ExtractCounts::default();
    for nsl in &records {
        let advert = nsl_to_advert(nsl, &cfg.rule, link, clock.now()).map_err(|e| e.to_string())?;
        if advert.is_blank() {
            continue;
        }
        if store.put_advert(advert).map_err(|e| e.to_string())?.is_inserted() {
            counts.new += 1;
        } else {
            counts.duplicate += 1;
        }
    }
    Ok(counts)
}

/// One pass over the category's index pages. Per-url failures are recorded
/// in the report and do not stop the pass.
pub async fn harvest_category(
    cfg: &CategoryAgentConfig,
    transport: &dyn Transport,
    store: &Datastore,
    clock: &dyn Clock,
) -> Result<HarvestReport, ConfigError> {
    cfg.validate()?;
    let date_pattern = today_pattern(&cfg.rule.date_format, clock)
        .map_err(|source| ConfigError::DateFormat { category: cfg.category.clone(), source })?;
    let mut report = HarvestReport {
        category: cfg.category.clone(),
        links_visited: 0,
        links_matched_today: 0,
        records_extracted: 0,
        records_new: 0,
        records_duplicate: 0,
        errors: Vec::new(),
        started_at: clock.now(),
        finished_at: clock.now(),
    };
    for index_url in &cfg.index_urls {
        report.links_visited += 1;
        let page = match execute(&cfg.fetch_plan.expr_for(index_url), transport).await {
            Ok(fetched) => fetched.page,
            Err(e) => {
                report.errors.push(UrlError { url: index_url.clone(), reason: e.to_string() });
                continue;
            }
        };
        let links = dated_links(&page, &date_pattern).expect("escaped date is a valid pattern");
        report.links_matched_today += links.len();
        for link in links {
            match extract_latest(&link, cfg, transport, store, clock).await {
                Ok(counts) => {
                    report.records_new += counts.new;
                    report.records_duplicate += counts.duplicate;
                }
                Err(reason) => report.errors.push(UrlError { url: link, reason }),
            }
        }
    }
    report.records_extracted = report.records_new + report.records_duplicate;
    report.finished_at = clock.now();
    tracing::info!(
        category = %report.category,
        new = report.records_new,
        duplicate = report.records_duplicate,
        errors = report.errors.len(),
        "harvest finished"
    );
    Ok(report)
}

/// A stop request deliverable from any task or thread.
#[derive(Debug)]
pub struct StopSignal {
    tx: watch::Sender<bool>,
}

impl Default for StopSignal {
    fn default() -> Self {
        StopSignal { tx: watch::Sender::new(false) }
    }
}

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        self.tx.send_replace(true);
    }

    pub fn is_stopped(&self) -> bool {
        *self.tx.borrow()
    }

    pub async fn stopped(&self) {
        let mut rx = self.tx.subscribe();
        let _ = rx.wait_for(|stopped| *stopped).await;
    }
}

/// Harvests, waits `wait_interval`, and repeats until `stop` fires. The
/// status cell is kept current and each report is sent on `reports` when
/// given. A stop arriving mid-harvest abandons that cycle.
pub async fn run_agent_loop(
    cfg: &CategoryAgentConfig,
    transport: &dyn Transport,
    store: &Datastore,
    clock: &dyn Clock,
    stop: &StopSignal,
    status: &Mutex<AgentStatus>,
    reports: Option<&mpsc::UnboundedSender<HarvestReport>>,
) {
    while !stop.is_stopped() {
        {
            let mut s = status.lock();
            s.state = AgentState::Running;
            s.next_run_at = None;
        }
        let outcome = tokio::select! {
            outcome = harvest_category(cfg, transport, store, clock) => outcome,
            _ = stop.stopped() => break,
        };
        let report = match outcome {
            Ok(report) => report,
            Err(e) => {
                let mut s = status.lock();
                s.state = AgentState::Error;
                s.error = Some(e.to_string());
                return;
            }
        };
        let next = clock.now() + chrono::Duration::from_std(cfg.wait_interval).unwrap_or(chrono::TimeDelta::MAX);
        {
            let mut s = status.lock();
            s.state = AgentState::Waiting;
            s.next_run_at = Some(next);
            s.last_report = Some(report.clone());
        }
        if let Some(tx) = reports {
            let _ = tx.send(report);
        }
        tokio::select! {
            _ = clock.sleep_until(next) => {}
            _ = stop.stopped() => break,
        }
    }
    let mut s = status.lock();
    s.state = AgentState::Stopped;
    s.next_run_at = None;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::fetch::{ScriptedTransport, Step};
    use crate::html::parse_html;
    use crate::rules::parse_rules;
    use chrono::TimeZone;

    fn rule() -> CategoryRule {
        parse_rules(
            r#"category cars {
                 list: elem(div)
                 title = elem(h2)
                 price = pat("Rs [0-9,]+")
               }"#,
        )
        .unwrap()
        .categories
        .remove(0)
    }

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2006, 3, 7, 8, 0, 0).unwrap()
    }

    #[test]
    fn links_inside_rows_or_near_anchor() {
        let page = parse_html(
            "<table>\
             <tr><td><a href='ads/1.html'>one</a></td><td>07/03/2006</td></tr>\
             <tr><td><a href='ads/2.html'>two</a></td><td>06/03/2006</td></tr>\
             <tr><td><a href='/ads/1.html'>dup</a> 07/03/2006</td></tr>\
             </table>\
             <a href='http://other/x'>x</a> posted 07/03/2006\
             <a href='y'>y</a>",
            "http://portal/cars.html",
        );
        let links = dated_links(&page, r"07/03/2006").unwrap();
        assert_eq!(links, vec!["http://portal/ads/1.html", "http://other/x"]);
    }

    #[test]
    fn window_fallback_is_bounded() {
        let pad = "x".repeat(DATE_WINDOW_CHARS - 10);
        let near = format!("<a href='a'>a</a>{pad}07/03/2006");
        assert_eq!(dated_links(&parse_html(&near, "http://h/"), "07/03/2006").unwrap().len(), 1);
        let far = format!("<a href='a'>a</a>{pad}x07/03/2006");
        assert!(dated_links(&parse_html(&far, "http://h/"), "07/03/2006").unwrap().is_empty());
        let before = "07/03/2006 <a href='a'>a</a>";
        assert!(dated_links(&parse_html(before, "http://h/"), "07/03/2006").unwrap().is_empty());
    }

    #[tokio::test(start_paused = true)]
    async fn harvest_counts_and_isolation() {
        let index = "<ul><li><a href='/a1'>1</a> 07/03/2006</li><li><a href='/a2'>2</a> 07/03/2006</li>\
                     <li><a href='/a3'>3</a> 06/03/2006</li></ul>";
        let transport = ScriptedTransport::new()
            .script("http://p/i", vec![Step::ok(index)])
            .script("http://p/a1", vec![Step::ok("<div><h2>Civic</h2>Rs 100</div>")])
            .script("http://p/a2", vec![Step::status(500)])
            .script("http://p/a3", vec![Step::ok("<div><h2>Old</h2>Rs 1</div>")]);
        let mut cfg = CategoryAgentConfig::new(rule(), vec!["http://p/i".into(), "http://p/down".into()]);
        cfg.fetch_plan = FetchPlan { timeout_ms: 100, retry: RetryPolicy::bounded(2, 10) };
        let store = Datastore::in_memory();
        let clock = SimClock::starting_at(epoch());

        let report = harvest_category(&cfg, &transport, &store, &clock).await.unwrap();
        assert_eq!((report.links_visited, report.links_matched_today), (2, 2));
        assert_eq!((report.records_new, report.records_duplicate), (1, 0));
        let failed: Vec<&str> = report.errors.iter().map(|e| e.url.as_str()).collect();
        assert_eq!(failed, vec!["http://p/a2", "http://p/down"]);
        assert_eq!(transport.calls("http://p/a3"), 0);
        assert_eq!(store.counts().adverts, 1);

        let again = harvest_category(&cfg, &transport, &store, &clock).await.unwrap();
        assert_eq!((again.records_new, again.records_duplicate, again.records_extracted), (0, 1, 1));
    }

    #[tokio::test(start_paused = true)]
    async fn blank_records_dropped() {
        let transport = ScriptedTransport::new().script("http://p/a", vec![Step::ok("<div>nothing</div>")]);
        let cfg = CategoryAgentConfig::new(rule(), vec!["http://p/i".into()]);
        let clock = SimClock::starting_at(epoch());
        let store = Datastore::in_memory();
        let counts = extract_latest("http://p/a", &cfg, &transport, &store, &clock).await.unwrap();
        assert_eq!(counts, ExtractCounts::default());
        assert_eq!(store.counts().adverts, 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CategoryAgentConfig::new(rule(), vec![]);
        assert_eq!(cfg.validate(), Err(ConfigError::NoIndexUrls("cars".into())));
        cfg.index_urls.push("http://p/i".into());
        cfg.category = "boats".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::RuleMismatch { .. })));
    }

    #[tokio::test(start_paused = true)]
    async fn loop_cycles_on_schedule_and_stops_while_waiting() {
        let transport = ScriptedTransport::new().script("http://p/i", vec![Step::ok("<p>none</p>")]);
        let cfg = CategoryAgentConfig::new(rule(), vec!["http://p/i".into()]);
        let store = Datastore::in_memory();
        let clock = SimClock::starting_at(epoch());
        let stop = StopSignal::new();
        let status = Mutex::new(AgentStatus::stopped("cars"));
        let (tx, mut rx) = mpsc::unbounded_channel();
        let agent = run_agent_loop(&cfg, &transport, &store, &clock, &stop, &status, Some(&tx));
        let watcher = async {
            let mut starts = Vec::new();
            while let Some(report) = rx.recv().await {
                starts.push(report.started_at);
                let s = status.lock().clone();
                assert_eq!(s.state, AgentState::Waiting);
                assert_eq!(s.next_run_at, Some(report.finished_at + chrono::Duration::seconds(900)));
                if starts.len() == 3 {
                    stop.stop();
                    break;
                }
            }
            starts
        };
        let ((), starts) = tokio::join!(agent, watcher);
        assert_eq!(starts, vec![epoch(), epoch() + chrono::Duration::seconds(900), epoch() + chrono::Duration::seconds(1800)]);
        assert_eq!(status.lock().state, AgentState::Stopped);
        assert_eq!(status.lock().next_run_at, None);
        assert_eq!(transport.calls("http://p/i"), 3);
    }
}
