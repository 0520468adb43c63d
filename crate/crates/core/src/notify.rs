//! Preference matching, the SMS queue and dispatch through a gateway.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::store::{normalize_ws, AdvertRecord, Datastore, MatchMode, Preference, StoreError, MAX_SMS_CHARS};

/// Fields shown in a message, when present.
pub const SMS_FIELDS: [&str; 4] = ["title", "price", "date", "contacts"];

/// Same category, and every constraint holds.
pub fn matches(advert: &AdvertRecord, pref: &Preference) -> bool {
    advert.category == pref.category
        && pref.constraints.iter().all(|c| {
            let have = normalize_ws(advert.field(c.field.trim())).to_lowercase();
            let want = normalize_ws(&c.value).to_lowercase();
            match c.mode {
                MatchMode::Equals => have == want,
                MatchMode::Contains => have.contains(&want),
            }
        })
}

/// `[category] title | price | date | contacts`, taking the shown fields in
/// `field_order` and skipping empty ones, cut to [`MAX_SMS_CHARS`].
pub fn compose_sms(advert: &AdvertRecord, field_order: &[&str]) -> String {
    let parts: Vec<String> = field_order
        .iter()
        .filter(|name| SMS_FIELDS.contains(name))
        .map(|name| normalize_ws(advert.field(name)))
        .filter(|v| !v.is_empty())
        .collect();
    let mut text = format!("[{}]", advert.category);
    if !parts.is_empty() {
        text.push(' ');
        text.push_str(&parts.join(" | "));
    }
    match text.char_indices().nth(MAX_SMS_CHARS) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub created: usize,
    pub high_water: u64,
}

fn category_depth(category: &str) -> usize {
    category.split('.').count()
}

/// Examines every advert above `high_water`, parent categories before their
/// sub-categories, and queues one message per subscribed client of each
/// matching preference not already notified. The new mark is persisted.
pub fn analyze_new(store: &Datastore, high_water: u64, now: DateTime<Utc>) -> Result<AnalysisOutcome, StoreError> {
    let mut adverts = store.list_adverts(None, high_water);
    adverts.sort_by(|a, b| {
        (category_depth(&a.category), &a.category, a.id).cmp(&(category_depth(&b.category), &b.category, b.id))
    });
    let preferences = store.list_preferences();
    let mut created = 0;
    let mut mark = high_water;
    for advert in &adverts {
        let order: Vec<&str> = advert.fields.keys().map(String::as_str).collect();
        for pref in preferences.iter().filter(|p| matches(advert, p)) {
            for client_id in store.subscribers(pref.id) {
                if store.already_notified(client_id, advert.id)? {
                    continue;
                }
                if store.enqueue_sms(client_id, advert.id, &compose_sms(advert, &order), now)?.is_inserted() {
                    created += 1;
                }
            }
        }
        mark = mark.max(advert.id);
    }
    if mark != store.high_water() {
        store.set_high_water(mark)?;
    }
    Ok(AnalysisOutcome { created, high_water: mark })
}

#[async_trait]
pub trait Gateway: Send + Sync {
    /// Delivers one message; the error is a reason for the report.
    async fn send(&self, mobile: &str, text: &str) -> Result<(), String>;
}

/// Appends `<rfc3339 timestamp> <mobile> <text>` lines to a sink file.
/// Chosen call numbers (1-based) can be made to fail.
#[derive(Debug)]
pub struct MockGateway {
    sink: PathBuf,
    fail_calls: HashSet<usize>,
    calls: Mutex<usize>,
}

impl MockGateway {
    pub fn new(sink: impl Into<PathBuf>) -> Self {
        MockGateway { sink: sink.into(), fail_calls: HashSet::new(), calls: Mutex::new(0) }
    }

    pub fn failing_calls(mut self, calls: impl IntoIterator<Item = usize>) -> Self {
        self.fail_calls.extend(calls);
        self
    }

    pub fn sink(&self) -> &Path {
        &self.sink
    }
}

#[async_trait]
impl Gateway for MockGateway {
    async fn send(&self, mobile: &str, text: &str) -> Result<(), String> {
        let mut calls = self.calls.lock();
        *calls += 1;
        if self.fail_calls.contains(&calls) {
            return Err(format!("scripted failure on call {calls}"));
        }
        let line = format!("{} {} {}\n", Utc::now().to_rfc3339(), mobile, text.replace('\n', " "));
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.sink)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| format!("sink {}: {e}", self.sink.display()))
    }
}

/// Posts `{"to", "body"}` to `<base>/send`; only a 200 answer carrying an
/// `id` counts as delivered.
#[derive(Debug, Clone)]
pub struct HttpGateway {
    endpoint: String,
    client: reqwest::Client,
}

impl HttpGateway {
    pub fn new(base_url: &str) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client configuration is static");
        HttpGateway { endpoint: format!("{}/send", base_url.trim_end_matches('/')), client }
    }
}

#[derive(Serialize)]
struct SendBody<'a> {
    to: &'a str,
    body: &'a str,
}

#[derive(Deserialize)]
struct SendReply {
    id: serde_json::Value,
}

#[async_trait]
impl Gateway for HttpGateway {
    async fn send(&self, mobile: &str, text: &str) -> Result<(), String> {
        let payload = serde_json::to_vec(&SendBody { to: mobile, body: text }).map_err(|e| e.to_string())?;
        let response = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(payload)
            .send()
            .await
            .map_err(|e| format!("gateway unreachable: {e}"))?;
        if response.status().as_u16() != 200 {
            return Err(format!("gateway answered {}", response.status().as_u16()));
        }
        let bytes = response.bytes().await.map_err(|e| e.to_string())?;
        match serde_json::from_slice::<SendReply>(&bytes) {
            Ok(reply) if !reply.id.is_null() => Ok(()),
            _ => Err("gateway reply has no id".into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchFailure {
    pub sms_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchReport {
    pub attempted: usize,
    pub delivered: usize,
    pub failed: Vec<DispatchFailure>,
}

/// Sends every pending message in id order. Delivered messages move to
/// sent; failed ones stay pending for the next run.
pub async fn dispatch_pending(store: &Datastore, gateway: &dyn Gateway) -> Result<DispatchReport, StoreError> {
    let mut report = DispatchReport::default();
    for msg in store.list_pending() {
        report.attempted += 1;
        let Some(client) = store.get_client(msg.client_id) else {
            report.failed.push(DispatchFailure { sms_id: msg.id, reason: format!("unknown client {}", msg.client_id) });
            continue;
        };
        match gateway.send(&client.mobile, &msg.text).await {
            Ok(()) => {
                store.mark_sent(msg.id, Utc::now())?;
                report.delivered += 1;
            }
            Err(reason) => {
                tracing::warn!(sms_id = msg.id, %reason, "send failed");
                report.failed.push(DispatchFailure { sms_id: msg.id, reason });
            }
        }
    }
    Ok(report)
}
