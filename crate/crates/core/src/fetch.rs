//! Page retrieval and the service combinators composed over it.
//!
//! A [`ServiceExpr`] describes how to obtain one page: plain GET/POST leaves
//! combined with fallback, race, timeout, retry and stall. [`execute`] runs
//! an expression against a [`Transport`]; every failure is reported in the
//! returned [`FetchOutcome`], never raised.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::future::Future;
use std::time::Duration;

use async_trait::async_trait;
use futures::future::{self, BoxFuture, Either, FutureExt};
use parking_lot::Mutex;
use thiserror::Error;

use crate::html::{parse_html, Page};

pub const MAX_REDIRECTS: usize = 5;
pub const MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub url: String,
    pub args: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// `None` retries forever.
    pub max_attempts: Option<u32>,
    pub delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: Some(5), delay_ms: 1000 }
    }
}

impl RetryPolicy {
    pub fn bounded(max_attempts: u32, delay_ms: u64) -> Self {
        RetryPolicy { max_attempts: Some(max_attempts), delay_ms }
    }

    pub fn unbounded(delay_ms: u64) -> Self {
        RetryPolicy { max_attempts: None, delay_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceExpr {
    Get { url: String, args: Vec<(String, String)> },
    Post { url: String, args: Vec<(String, String)> },
    Fallback(Box<ServiceExpr>, Box<ServiceExpr>),
    Race(Box<ServiceExpr>, Box<ServiceExpr>),
    Timeout { ms: u64, inner: Box<ServiceExpr> },
    Retry { inner: Box<ServiceExpr>, policy: RetryPolicy },
    Stall,
}

impl ServiceExpr {
    pub fn get(url: &str) -> Self {
        ServiceExpr::Get { url: url.to_string(), args: Vec::new() }
    }

    pub fn post(url: &str, args: &[(&str, &str)]) -> Self {
        ServiceExpr::Post { url: url.to_string(), args: owned(args) }
    }

    pub fn fallback(self, other: ServiceExpr) -> Self {
        ServiceExpr::Fallback(Box::new(self), Box::new(other))
    }

    pub fn race(self, other: ServiceExpr) -> Self {
        ServiceExpr::Race(Box::new(self), Box::new(other))
    }

    pub fn timeout(self, ms: u64) -> Self {
        ServiceExpr::Timeout { ms, inner: Box::new(self) }
    }

    pub fn retry(self, policy: RetryPolicy) -> Self {
        ServiceExpr::Retry { inner: Box::new(self), policy }
    }

    /// Checks `t > 0` for every timeout and a positive attempt bound for
    /// every retry.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ServiceExpr::Get { .. } | ServiceExpr::Post { .. } | ServiceExpr::Stall => Ok(()),
            ServiceExpr::Fallback(s, t) | ServiceExpr::Race(s, t) => {
                s.validate()?;
                t.validate()
            }
            ServiceExpr::Timeout { ms: 0, .. } => Err("timeout must be positive".into()),
            ServiceExpr::Timeout { inner, .. } => inner.validate(),
            ServiceExpr::Retry { policy: RetryPolicy { max_attempts: Some(0), .. }, .. } => {
                Err("retry needs at least one attempt".into())
            }
            ServiceExpr::Retry { inner, .. } => inner.validate(),
        }
    }
}

impl fmt::Display for ServiceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceExpr::Get { url, .. } => write!(f, "Get({url})"),
            ServiceExpr::Post { url, .. } => write!(f, "Post({url})"),
            ServiceExpr::Fallback(s, t) => write!(f, "Fallback({s}, {t})"),
            ServiceExpr::Race(s, t) => write!(f, "Race({s}, {t})"),
            ServiceExpr::Timeout { ms, inner } => write!(f, "Timeout({ms}, {inner})"),
            ServiceExpr::Retry { inner, policy } => match policy.max_attempts {
                Some(n) => write!(f, "Retry({inner}, max {n})"),
                None => write!(f, "Retry({inner})"),
            },
            ServiceExpr::Stall => f.write_str("Stall"),
        }
    }
}

fn owned(args: &[(&str, &str)]) -> Vec<(String, String)> {
    args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[derive(Debug, Clone)]
pub struct Fetched {
    pub page: Page,
    pub status: u16,
    /// Time taken by the whole expression that produced this page.
    pub elapsed_ms: u64,
    /// Attempts used by the innermost retry around the winning leaf; 1 when
    /// no retry was involved.
    pub attempts: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("timed out")]
    Timeout,
    #[error("both legs failed")]
    BothFailed,
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<FetchError> },
    #[error("cancelled")]
    Cancelled,
}

impl FetchError {
    /// Short machine-readable reason.
    pub fn reason(&self) -> &'static str {
        match self {
            FetchError::Network(_) => "network",
            FetchError::HttpStatus(_) => "http-status",
            FetchError::Timeout => "timeout",
            FetchError::BothFailed => "both-failed",
            FetchError::RetriesExhausted { .. } => "retries-exhausted",
            FetchError::Cancelled => "cancelled",
        }
    }
}

pub type FetchOutcome = Result<Fetched, FetchError>;

#[async_trait]
pub trait Transport: Send + Sync {
    async fn fetch(&self, request: &Request) -> FetchOutcome;
}

/// Runs `expr` to completion.
pub async fn execute(expr: &ServiceExpr, transport: &dyn Transport) -> FetchOutcome {
    let started = tokio::time::Instant::now();
    let mut outcome = run(expr, transport).await;
    if let Ok(fetched) = &mut outcome {
        fetched.elapsed_ms = started.elapsed().as_millis() as u64;
    }
    outcome
}

/// Runs `expr` until it completes or `cancel` resolves, whichever is first.
pub async fn execute_until<C>(expr: &ServiceExpr, transport: &dyn Transport, cancel: C) -> FetchOutcome
where
    C: Future<Output = ()> + Send,
{
    tokio::select! {
        outcome = execute(expr, transport) => outcome,
        _ = cancel => Err(FetchError::Cancelled),
    }
}

pub async fn get_url(transport: &dyn Transport, url: &str, args: &[(&str, &str)]) -> FetchOutcome {
    execute(&ServiceExpr::Get { url: url.to_string(), args: owned(args) }, transport).await
}

pub async fn post_url(transport: &dyn Transport, url: &str, args: &[(&str, &str)]) -> FetchOutcome {
    execute(&ServiceExpr::post(url, args), transport).await
}

fn run<'a>(expr: &'a ServiceExpr, transport: &'a dyn Transport) -> BoxFuture<'a, FetchOutcome> {
    async move {
        match expr {
            ServiceExpr::Get { url, args } => {
                transport.fetch(&Request { method: Method::Get, url: url.clone(), args: args.clone() }).await
            }
            ServiceExpr::Post { url, args } => {
                transport.fetch(&Request { method: Method::Post, url: url.clone(), args: args.clone() }).await
            }
            ServiceExpr::Fallback(s, t) => match run(s, transport).await {
                Ok(fetched) => Ok(fetched),
                Err(_) => run(t, transport).await,
            },
            ServiceExpr::Race(s, t) => match future::select(run(s, transport), run(t, transport)).await {
                Either::Left((Ok(fetched), _)) | Either::Right((Ok(fetched), _)) => Ok(fetched),
                Either::Left((Err(_), other)) | Either::Right((Err(_), other)) => {
                    other.await.map_err(|_| FetchError::BothFailed)
                }
            },
            ServiceExpr::Timeout { ms, inner } => {
                match tokio::time::timeout(Duration::from_millis(*ms), run(inner, transport)).await {
                    Ok(outcome) => outcome,
                    Err(_) => Err(FetchError::Timeout),
                }
            }
            ServiceExpr::Retry { inner, policy } => {
                let mut attempts = 0u32;
                loop {
                    attempts += 1;
                    match run(inner, transport).await {
                        Ok(mut fetched) => {
                            fetched.attempts = attempts;
                            return Ok(fetched);
                        }
                        Err(last) => {
                            if policy.max_attempts.is_some_and(|max| attempts >= max) {
                                return Err(FetchError::RetriesExhausted { attempts, last: Box::new(last) });
                            }
                        }
                    }
                    tokio::time::sleep(Duration::from_millis(policy.delay_ms)).await;
                }
            }
            ServiceExpr::Stall => future::pending().await,
        }
    }
    .boxed()
}

/// HTTP/1.1 transport. Follows up to [`MAX_REDIRECTS`] redirects and
/// rejects bodies over [`MAX_BODY_BYTES`].
#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::limited(MAX_REDIRECTS))
            .connect_timeout(Duration::from_secs(10))
            .user_agent(concat!("adwatch/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("http client configuration is static");
        HttpTransport { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

fn form_encode(args: &[(String, String)]) -> String {
    url::form_urlencoded::Serializer::new(String::new()).extend_pairs(args).finish()
}

#[async_trait]
impl Transport for HttpTransport {
    async fn fetch(&self, request: &Request) -> FetchOutcome {
        let mut target = url::Url::parse(&request.url).map_err(|e| FetchError::Network(format!("bad url: {e}")))?;
        if !matches!(target.scheme(), "http" | "https") {
            return Err(FetchError::Network(format!("unsupported scheme {}", target.scheme())));
        }
        let builder = match request.method {
            Method::Get => {
                if !request.args.is_empty() {
                    target.query_pairs_mut().extend_pairs(&request.args);
                }
                self.client.get(target)
            }
            Method::Post => self
                .client
                .post(target)
                .header("content-type", "application/x-www-form-urlencoded")
                .body(form_encode(&request.args)),
        };
        let mut response = builder.send().await.map_err(|e| FetchError::Network(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(FetchError::HttpStatus(status.as_u16()));
        }
        let final_url = response.url().to_string();
        let mut body = Vec::new();
        while let Some(chunk) = response.chunk().await.map_err(|e| FetchError::Network(e.to_string()))? {
            if body.len() + chunk.len() > MAX_BODY_BYTES {
                return Err(FetchError::Network(format!("body exceeds {MAX_BODY_BYTES} bytes")));
            }
            body.extend_from_slice(&chunk);
        }
        let text = String::from_utf8_lossy(&body);
        Ok(Fetched { page: parse_html(&text, &final_url), status: status.as_u16(), elapsed_ms: 0, attempts: 1 })
    }
}

/// What a scripted url does on one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Body(String),
    Status(u16),
    Network(String),
    /// Never answers.
    Hang,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub latency_ms: u64,
    pub reply: Reply,
}

impl Step {
    pub fn ok(body: &str) -> Self {
        Step { latency_ms: 0, reply: Reply::Body(body.to_string()) }
    }

    pub fn status(code: u16) -> Self {
        Step { latency_ms: 0, reply: Reply::Status(code) }
    }

    pub fn network(message: &str) -> Self {
        Step { latency_ms: 0, reply: Reply::Network(message.to_string()) }
    }

    pub fn hang() -> Self {
        Step { latency_ms: 0, reply: Reply::Hang }
    }

    pub fn after(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }
}

#[derive(Debug, Default)]
struct Script {
    steps: VecDeque<Step>,
    last: Option<Step>,
}

/// An in-process transport answering from per-url scripts, with latencies
/// taken on the tokio timer. Each url consumes its steps in order and then
/// repeats the last one; unscripted urls fail with a network error. Every
/// request is counted.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    scripts: Mutex<HashMap<String, Script>>,
    log: Mutex<Vec<Request>>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(self, url: &str, steps: Vec<Step>) -> Self {
        self.scripts.lock().insert(url.to_string(), Script { steps: steps.into(), last: None });
        self
    }

    pub fn calls(&self, url: &str) -> usize {
        self.log.lock().iter().filter(|r| r.url == url).count()
    }

    pub fn total_calls(&self) -> usize {
        self.log.lock().len()
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().clone()
    }

    fn next_step(&self, url: &str) -> Option<Step> {
        let mut scripts = self.scripts.lock();
        let script = scripts.get_mut(url)?;
        match script.steps.pop_front() {
            Some(step) => {
                script.last = Some(step.clone());
                Some(step)
            }
            None => script.last.clone(),
        }
    }
}

#[async_trait]
impl Transport for ScriptedTransport {
    async fn fetch(&self, request: &Request) -> FetchOutcome {
        self.log.lock().push(request.clone());
        let Some(step) = self.next_step(&request.url) else {
            return Err(FetchError::Network(format!("no route to {}", request.url)));
        };
        if step.latency_ms > 0 {
            tokio::time::sleep(Duration::from_millis(step.latency_ms)).await;
        }
        match step.reply {
            Reply::Body(body) => {
                Ok(Fetched { page: parse_html(&body, &request.url), status: 200, elapsed_ms: 0, attempts: 1 })
            }
            Reply::Status(code) => Err(FetchError::HttpStatus(code)),
            Reply::Network(message) => Err(FetchError::Network(message)),
            Reply::Hang => future::pending().await,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(outcome: &FetchOutcome) -> &str {
        outcome.as_ref().unwrap().page.source()
    }

    #[tokio::test(start_paused = true)]
    async fn fallback_is_lazy() {
        let t = ScriptedTransport::new().script("s", vec![Step::ok("S")]).script("t", vec![Step::ok("T")]);
        let out = execute(&ServiceExpr::get("s").fallback(ServiceExpr::get("t")), &t).await;
        assert_eq!(body(&out), "S");
        assert_eq!(t.calls("t"), 0);

        let t = ScriptedTransport::new().script("s", vec![Step::status(500)]).script("t", vec![Step::ok("T")]);
        let out = execute(&ServiceExpr::get("s").fallback(ServiceExpr::get("t")), &t).await;
        assert_eq!(body(&out), "T");
        assert_eq!((t.calls("s"), t.calls("t")), (1, 1));
    }

    #[tokio::test(start_paused = true)]
    async fn race_picks_first_success() {
        let t = ScriptedTransport::new()
            .script("s", vec![Step::ok("S").after(50)])
            .script("t", vec![Step::ok("T").after(10)]);
        let out = execute(&ServiceExpr::get("s").race(ServiceExpr::get("t")), &t).await;
        assert_eq!(body(&out), "T");
        assert_eq!(out.unwrap().elapsed_ms, 10);

        let t = ScriptedTransport::new()
            .script("s", vec![Step::ok("S").after(50)])
            .script("t", vec![Step::network("refused")]);
        let out = execute(&ServiceExpr::get("s").race(ServiceExpr::get("t")), &t).await;
        assert_eq!(body(&out), "S");
        assert_eq!(out.unwrap().elapsed_ms, 50);
    }

    #[tokio::test(start_paused = true)]
    async fn race_fails_only_when_both_fail() {
        let t = ScriptedTransport::new()
            .script("s", vec![Step::status(503).after(5)])
            .script("t", vec![Step::network("x").after(40)]);
        let started = tokio::time::Instant::now();
        let out = execute(&ServiceExpr::get("s").race(ServiceExpr::get("t")), &t).await;
        assert_eq!(out.unwrap_err(), FetchError::BothFailed);
        assert_eq!(started.elapsed(), Duration::from_millis(40));
    }

    #[tokio::test(start_paused = true)]
    async fn timeout_of_stall_is_exact() {
        let t = ScriptedTransport::new();
        let started = tokio::time::Instant::now();
        let out = execute(&ServiceExpr::Stall.timeout(100), &t).await;
        assert_eq!(out.unwrap_err(), FetchError::Timeout);
        assert_eq!(started.elapsed(), Duration::from_millis(100));
    }

    #[tokio::test(start_paused = true)]
    async fn timeout_passes_fast_results() {
        let t = ScriptedTransport::new().script("s", vec![Step::ok("S").after(99)]);
        assert_eq!(body(&execute(&ServiceExpr::get("s").timeout(100), &t).await), "S");
        let t = ScriptedTransport::new().script("s", vec![Step::hang()]);
        assert_eq!(execute(&ServiceExpr::get("s").timeout(100), &t).await.unwrap_err(), FetchError::Timeout);
    }

    #[tokio::test(start_paused = true)]
    async fn retry_counts_attempts() {
        let t = ScriptedTransport::new()
            .script("s", vec![Step::status(500), Step::network("x"), Step::ok("S")]);
        let out = execute(&ServiceExpr::get("s").retry(RetryPolicy::bounded(5, 1000)), &t).await.unwrap();
        assert_eq!(out.attempts, 3);
        assert_eq!(t.calls("s"), 3);
        assert_eq!(out.elapsed_ms, 2000);

        let t = ScriptedTransport::new().script("s", vec![Step::status(500)]);
        let err = execute(&ServiceExpr::get("s").retry(RetryPolicy::bounded(4, 10)), &t).await.unwrap_err();
        assert_eq!(err, FetchError::RetriesExhausted { attempts: 4, last: Box::new(FetchError::HttpStatus(500)) });
        assert_eq!(t.calls("s"), 4);
    }

    #[tokio::test(start_paused = true)]
    async fn retry_of_timeout_recovers_from_hang() {
        let t = ScriptedTransport::new().script("s", vec![Step::hang(), Step::ok("S")]);
        let expr = ServiceExpr::get("s").timeout(100).retry(RetryPolicy::bounded(3, 0));
        let out = execute(&expr, &t).await.unwrap();
        assert_eq!((out.attempts, out.elapsed_ms), (2, 100));
    }

    #[tokio::test(start_paused = true)]
    async fn cancellation() {
        let t = ScriptedTransport::new();
        let cancel = tokio::time::sleep(Duration::from_millis(5));
        assert_eq!(execute_until(&ServiceExpr::Stall, &t, cancel).await.unwrap_err(), FetchError::Cancelled);
    }

    #[test]
    fn validation_and_display() {
        assert!(ServiceExpr::Stall.timeout(0).validate().is_err());
        assert!(ServiceExpr::get("u").retry(RetryPolicy::bounded(0, 1)).validate().is_err());
        let expr = ServiceExpr::get("u").timeout(5).retry(RetryPolicy::default());
        assert!(expr.validate().is_ok());
        assert_eq!(expr.to_string(), "Retry(Timeout(5, Get(u)), max 5)");
        assert_eq!(form_encode(&owned(&[("q", "a b&c"), ("n", "1")])), "q=a+b%26c&n=1");
    }
}
