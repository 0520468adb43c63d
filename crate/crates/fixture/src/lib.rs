//! A local classified-ads portal rendered from a JSON spec.
//!
//! Category index pages live at `/<category>.html` and list each ad with a
//! link to `/ads/<id>.html` and its posting date. Dates in the spec are
//! relative (`"today"`, `"today-2"`) or absolute (`"2006-03-01"`) and are
//! resolved against the date the server was started with, so pages are a
//! pure function of `(spec, today)`.
//!
//! Extra routes for transport tests: `POST /echo` lists the posted form
//! fields, `GET /status/<code>` answers with that status, and paths named in
//! the spec's `flaky` list fail or stall as scripted.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use chrono::NaiveDate;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub const DEFAULT_SPEC_JSON: &str = include_str!("../fixtures/default.json");

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot bind port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error("invalid fixture spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Table,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdSpec {
    pub id: u64,
    pub posted: String,
    pub title: String,
    pub fields: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub title: String,
    pub layout: Layout,
    pub ads: Vec<AdSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlakyRule {
    pub path: String,
    /// Requests answered with `status` before the path behaves normally.
    pub fail_times: u32,
    pub status: u16,
    /// Added to every request for the path.
    pub delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub categories: Vec<CategorySpec>,
    #[serde(default)]
    pub flaky: Vec<FlakyRule>,
}

impl FixtureSpec {
    pub fn default_spec() -> Self {
        Self::from_json(DEFAULT_SPEC_JSON).expect("bundled fixture spec is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let spec: FixtureSpec = serde_json::from_str(text).map_err(|e| FixtureError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), FixtureError> {
        let mut ids = std::collections::HashSet::new();
        for ad in self.categories.iter().flat_map(|c| &c.ads) {
            if !ids.insert(ad.id) {
                return Err(FixtureError::Spec(format!("ad id {} used twice", ad.id)));
            }
            resolve_date(&ad.posted, NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"))
                .ok_or_else(|| FixtureError::Spec(format!("ad {}: bad date {:?}", ad.id, ad.posted)))?;
        }
        Ok(())
    }

    pub fn category(&self, name: &str) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn ad(&self, id: u64) -> Option<(&CategorySpec, &AdSpec)> {
        self.categories.iter().find_map(|c| c.ads.iter().find(|a| a.id == id).map(|a| (c, a)))
    }

    pub fn ad_count(&self) -> usize {
        self.categories.iter().map(|c| c.ads.len()).sum()
    }

    /// Ads whose posting date resolves to `day` when served on `today`.
    pub fn ads_posted_on(&self, day: NaiveDate, today: NaiveDate) -> Vec<&AdSpec> {
        self.categories
            .iter()
            .flat_map(|c| &c.ads)
            .filter(|a| resolve_date(&a.posted, today) == Some(day))
            .collect()
    }
}

/// `today`, `today-N`, `today+N` or an ISO date.
pub fn resolve_date(posted: &str, today: NaiveDate) -> Option<NaiveDate> {
    let posted = posted.trim();
    if let Some(rest) = posted.strip_prefix("today") {
        if rest.is_empty() {
            return Some(today);
        }
        let (sign, n) = rest.split_at(1);
        let days = chrono::Days::new(n.parse().ok()?);
        return match sign {
            "-" => today.checked_sub_days(days),
            "+" => today.checked_add_days(days),
            _ => None,
        };
    }
    NaiveDate::parse_from_str(posted, "%Y-%m-%d").ok()
}

/// `dd/MM/yyyy`, the portal's date style.
pub fn portal_date(day: NaiveDate) -> String {
    day.format("%d/%m/%Y").to_string()
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn ad_path(id: u64) -> String {
    format!("/ads/{id}.html")
}

pub fn index_path(category: &str) -> String {
    format!("/{category}.html")
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head><title>{}</title></head>\n<body>\n\
         <div id=\"header\"><a href=\"/\">Petites annonces</a></div>\n{body}\
         <p class=\"footer\">Adverts are published as received.</p>\n</body>\n</html>\n",
        escape(title)
    )
}

pub fn render_home(spec: &FixtureSpec) -> String {
    let mut body = String::from("<ul class=\"categories\">\n");
    for c in &spec.categories {
        let _ = writeln!(body, "<li><a href=\"{}\">{}</a></li>", index_path(&c.name), escape(&c.title));
    }
    body.push_str("</ul>\n");
    page("Petites annonces", &body)
}

pub fn render_index(category: &CategorySpec, today: NaiveDate) -> String {
    let mut body = format!("<h1>{}</h1>\n", escape(&category.title));
    let dated = category.ads.iter().map(|a| (a, resolve_date(&a.posted, today).map(portal_date).unwrap_or_default()));
    match category.layout {
        Layout::Table => {
            body.push_str("<table class=\"listing\">\n<tr><th>Advert</th><th>Posted</th></tr>\n");
            for (ad, date) in dated {
                let _ = writeln!(
                    body,
                    "<tr><td><a href=\"{}\">{}</a></td><td>{date}</td></tr>",
                    ad_path(ad.id),
                    escape(&ad.title)
                );
            }
            body.push_str("</table>\n");
        }
        Layout::List => {
            body.push_str("<ul class=\"listing\">\n");
            for (ad, date) in dated {
                let _ = writeln!(body, "<li><a href=\"{}\">{}</a> posted on {date}</li>", ad_path(ad.id), escape(&ad.title));
            }
            body.push_str("</ul>\n");
        }
    }
    page(&category.title, &body)
}

pub fn render_ad(category: &CategorySpec, ad: &AdSpec, today: NaiveDate) -> String {
    let date = resolve_date(&ad.posted, today).map(portal_date).unwrap_or_default();
    let mut body = format!(
        "<p class=\"crumbs\"><a href=\"{}\">{}</a></p>\n<div class=\"advert\">\n<h2>{}</h2>\n<table>\n",
        index_path(&category.name),
        escape(&category.title),
        escape(&ad.title)
    );
    let mut rows: Vec<(&str, &str)> = ad.fields.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    rows.insert(rows.len().min(1), ("Posted", &date));
    for (name, value) in rows {
        let _ = writeln!(body, "<tr><th>{}</th><td>{}</td></tr>", escape(name), escape(value));
    }
    body.push_str("</table>\n</div>\n");
    page(&ad.title, &body)
}

pub fn render_echo(form: &[u8]) -> String {
    let mut body = String::from("<ul class=\"echo\">\n");
    for (k, v) in url::form_urlencoded::parse(form) {
        let _ = writeln!(body, "<li>{}={}</li>", escape(&k), escape(&v));
    }
    body.push_str("</ul>\n");
    page("echo", &body)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoggedRequest {
    pub method: String,
    pub path: String,
}

struct PortalState {
    spec: FixtureSpec,
    today: NaiveDate,
    failures: Mutex<HashMap<String, u32>>,
    log: Mutex<Vec<LoggedRequest>>,
}

fn html(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response()
}

fn not_found() -> Response {
    html(StatusCode::NOT_FOUND, page("Not found", "<p>No such page.</p>\n"))
}

async fn handle(State(state): State<Arc<PortalState>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    state.log.lock().push(LoggedRequest { method: method.to_string(), path: path.clone() });

    let flaky = state.spec.flaky.iter().find(|f| f.path == path);
    if let Some(rule) = flaky {
        if rule.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(rule.delay_ms)).await;
        }
        let failed_so_far = {
            let mut failures = state.failures.lock();
            let n = failures.entry(path.clone()).or_insert(0);
            let before = *n;
            if before < rule.fail_times {
                *n += 1;
            }
            before
        };
        if failed_so_far < rule.fail_times {
            let status = StatusCode::from_u16(rule.status).unwrap_or(StatusCode::SERVICE_UNAVAILABLE);
            return html(status, page("Unavailable", "<p>Try again later.</p>\n"));
        }
    }

    if method == Method::POST {
        return if path == "/echo" { html(StatusCode::OK, render_echo(&body)) } else { not_found() };
    }
    if method != Method::GET {
        return html(StatusCode::METHOD_NOT_ALLOWED, page("Method not allowed", ""));
    }
    if path == "/" {
        return html(StatusCode::OK, render_home(&state.spec));
    }
    if let Some(code) = path.strip_prefix("/status/") {
        return match code.parse::<u16>().ok().and_then(|c| StatusCode::from_u16(c).ok()) {
            Some(status) => html(status, page("status", &format!("<p>{}</p>\n", status.as_u16()))),
            None => not_found(),
        };
    }
    if let Some(id) = path.strip_prefix("/ads/").and_then(|r| r.strip_suffix(".html")) {
        return match id.parse().ok().and_then(|id| state.spec.ad(id)) {
            Some((category, ad)) => html(StatusCode::OK, render_ad(category, ad, state.today)),
            None => not_found(),
        };
    }
    if let Some(category) = path.strip_prefix('/').and_then(|r| r.strip_suffix(".html")).and_then(|n| state.spec.category(n)) {
        return html(StatusCode::OK, render_index(category, state.today));
    }
    if flaky.is_some() {
        return html(StatusCode::OK, page("ok", "<p>ok</p>\n"));
    }
    not_found()
}

/// A running portal; shut down on drop.
pub struct FixtureServer {
    addr: SocketAddr,
    state: Arc<PortalState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and starts serving.
    pub async fn start(spec: FixtureSpec, today: NaiveDate, port: u16) -> Result<Self, FixtureError> {
        let listener = tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).await.map_err(|source| {
            if source.kind() == std::io::ErrorKind::AddrInUse {
                FixtureError::PortInUse(port)
            } else {
                FixtureError::Bind { port, source }
            }
        })?;
        let addr = listener.local_addr().map_err(|source| FixtureError::Bind { port, source })?;
        let state = Arc::new(PortalState {
            spec,
            today,
            failures: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new().fallback(handle).with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(FixtureServer { addr, state, shutdown: Some(tx), task: Some(task) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url(), path)
    }

    pub fn today(&self) -> NaiveDate {
        self.state.today
    }

    pub fn spec(&self) -> &FixtureSpec {
        &self.state.spec
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().clone()
    }

    pub fn request_count(&self, path: &str) -> usize {
        self.state.log.lock().iter().filter(|r| r.path == path).count()
    }

    /// Serves until the task ends (it only ends on shutdown).
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Starts the portal; see [`FixtureServer::start`].
pub async fn serve_fixture(spec: FixtureSpec, today: NaiveDate, port: u16) -> Result<FixtureServer, FixtureError> {
    FixtureServer::start(spec, today, port).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2006, 3, 7).unwrap()
    }

    #[test]
    fn default_spec_shape() {
        let spec = FixtureSpec::default_spec();
        assert_eq!(spec.ad_count(), 12);
        let names: Vec<&str> = spec.categories.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["vehicles.cars", "property.rent", "electronics"]);
        assert_eq!(spec.ads_posted_on(day(), day()).len(), 9);
        assert_eq!(spec.ads_posted_on(day().pred_opt().unwrap(), day()).len(), 3);
        let layouts: Vec<Layout> = spec.categories.iter().map(|c| c.layout).collect();
        assert!(layouts.contains(&Layout::Table) && layouts.contains(&Layout::List));
    }

    #[test]
    fn dates() {
        assert_eq!(resolve_date("today", day()), Some(day()));
        assert_eq!(resolve_date("today-7", day()), NaiveDate::from_ymd_opt(2006, 2, 28));
        assert_eq!(resolve_date("2001-01-02", day()), NaiveDate::from_ymd_opt(2001, 1, 2));
        assert_eq!(resolve_date("yesterday", day()), None);
        assert_eq!(portal_date(day()), "07/03/2006");
    }

    #[test]
    fn rendering_is_deterministic_and_escaped() {
        let spec = FixtureSpec::default_spec();
        let cars = spec.category("vehicles.cars").unwrap();
        assert_eq!(render_index(cars, day()), render_index(cars, day()));
        let index = render_index(cars, day());
        assert!(index.contains("<tr><td><a href=\"/ads/1.html\">Honda Civic</a></td><td>07/03/2006</td></tr>"));
        assert!(index.contains("<td>06/03/2006</td>"));
        assert!(index.contains("Honda Accord &amp; extras"));
        let (cat, ad) = spec.ad(1).unwrap();
        let page = render_ad(cat, ad, day());
        assert!(page.contains("<tr><th>Price</th><td>Rs 250,000</td></tr>\n<tr><th>Posted</th><td>07/03/2006</td></tr>"));
        assert!(render_echo(b"a=1&b=x+y").contains("<li>b=x y</li>"));
    }

    #[test]
    fn rejects_bad_specs() {
        let dup = r#"{"categories":[{"name":"c","title":"C","layout":"list","ads":[
            {"id":1,"posted":"today","title":"a","fields":[]},{"id":1,"posted":"today","title":"b","fields":[]}]}]}"#;
        assert!(FixtureSpec::from_json(dup).is_err());
        let bad_date = r#"{"categories":[{"name":"c","title":"C","layout":"list","ads":[
            {"id":1,"posted":"someday","title":"a","fields":[]}]}]}"#;
        assert!(FixtureSpec::from_json(bad_date).is_err());
    }
}
