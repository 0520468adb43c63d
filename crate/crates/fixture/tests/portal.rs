use adwatch_fixture::{index_path, render_index, FixtureError, FixtureServer, FixtureSpec};
use chrono::NaiveDate;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 3, 7).unwrap()
}

async fn get(url: &str) -> (u16, String) {
    let r = reqwest::get(url).await.unwrap();
    (r.status().as_u16(), r.text().await.unwrap())
}

#[tokio::test]
async fn serves_index_ads_and_errors() {
    let spec = FixtureSpec::default_spec();
    let server = FixtureServer::start(spec.clone(), day(), 0).await.unwrap();
    let (status, body) = get(&server.url(&index_path("vehicles.cars"))).await;
    assert_eq!(status, 200);
    assert_eq!(body, render_index(spec.category("vehicles.cars").unwrap(), day()));
    let (status, body) = get(&server.url("/ads/6.html")).await;
    assert_eq!(status, 200);
    assert!(body.contains("<h2>Two-bedroom flat, Curepipe</h2>"));
    assert_eq!(get(&server.url("/missing")).await.0, 404);
    assert_eq!(get(&server.url("/ads/99.html")).await.0, 404);
    assert_eq!(get(&server.url("/status/500")).await.0, 500);
    assert_eq!(server.requests().len(), 5);
    assert_eq!(server.request_count("/ads/6.html"), 1);
}

#[tokio::test]
async fn flaky_path_fails_then_recovers() {
    let server = FixtureServer::start(FixtureSpec::default_spec(), day(), 0).await.unwrap();
    let codes = [
        get(&server.url("/flaky.html")).await.0,
        get(&server.url("/flaky.html")).await.0,
        get(&server.url("/flaky.html")).await.0,
    ];
    assert_eq!(codes, [503, 503, 200]);
    assert_eq!(server.request_count("/flaky.html"), 3);
}

#[tokio::test]
async fn echo_lists_posted_fields() {
    let server = FixtureServer::start(FixtureSpec::default_spec(), day(), 0).await.unwrap();
    let client = reqwest::Client::new();
    let body = client
        .post(server.url("/echo"))
        .header("content-type", "application/x-www-form-urlencoded")
        .body("make=Honda&model=Civic")
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert!(body.contains("<li>make=Honda</li>") && body.contains("<li>model=Civic</li>"));
}

#[tokio::test]
async fn busy_port_is_reported() {
    let first = FixtureServer::start(FixtureSpec::default_spec(), day(), 0).await.unwrap();
    let port = first.addr().port();
    match FixtureServer::start(FixtureSpec::default_spec(), day(), port).await {
        Err(FixtureError::PortInUse(p)) => assert_eq!(p, port),
        other => panic!("expected PortInUse, got {:?}", other.map(|s| s.addr())),
    }
    first.shutdown().await;
}
