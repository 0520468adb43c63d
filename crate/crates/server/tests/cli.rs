mod common;

use adwatch_fixture::{FixtureServer, FixtureSpec};
use chrono::NaiveDate;
use common::{adwatch, args, write_config};
use serde_json::Value;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 3, 7).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn run_once_single_category_and_env_data_dir() {
    let portal = FixtureServer::start(FixtureSpec::default_spec(), day(), 0).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &portal.base_url());
    let data = dir.path().join("data");
    let out = adwatch(
        args(&["run-once", "--category", "property.rent", "--config", config.to_str().unwrap(), "--today", "2006-03-07"]),
        vec![("HARVEST_DATA_DIR".into(), data.to_string_lossy().into_owned())],
    )
    .await;
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let harvest = report["harvest"].as_array().unwrap();
    assert_eq!(harvest.len(), 1);
    assert_eq!(harvest[0]["category"], "property.rent");
    assert_eq!(harvest[0]["records_new"], 3);
    assert_eq!(harvest[0]["links_matched_today"], 3);
    assert!(data.join("adverts.jsonl").exists());
}

#[tokio::test(flavor = "multi_thread")]
async fn extract_is_deterministic() {
    let portal = FixtureServer::start(FixtureSpec::default_spec(), day(), 0).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &portal.base_url());
    let rules = dir.path().join("portal.rules");
    let url = portal.url("/ads/1.html");
    let run = || {
        adwatch(
            args(&["extract", "--url", &url, "--rules", rules.to_str().unwrap(), "--category", "vehicles.cars", "--today", "2006-03-07"]),
            vec![],
        )
    };
    let first = run().await;
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, run().await.stdout);
    let text = String::from_utf8(first.stdout).unwrap().replace(&portal.base_url(), "http://portal");
    let got: Value = serde_json::from_str(&text).unwrap();
    let golden: Value = serde_json::from_str(include_str!("golden/extract_ad1.json")).unwrap();
    assert_eq!(got, golden);
    assert!(!dir.path().join("data").exists());
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "agents = 3").unwrap();
    let data = dir.path().join("d");
    let out = adwatch(args(&["run-once", "--config", bad.to_str().unwrap(), "--data", data.to_str().unwrap()]), vec![]).await;
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));

    let config = write_config(dir.path(), "http://127.0.0.1:9");
    let out = adwatch(
        args(&["run-once", "--category", "boats", "--config", config.to_str().unwrap(), "--data", data.to_str().unwrap()]),
        vec![],
    )
    .await;
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("boats"));

    let out = adwatch(args(&["run-once", "--config", config.to_str().unwrap()]), vec![]).await;
    assert!(!out.status.success());
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_portal_is_reported_per_url() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "http://127.0.0.1:9");
    let data = dir.path().join("d");
    let out = adwatch(args(&["run-once", "--config", config.to_str().unwrap(), "--data", data.to_str().unwrap()]), vec![]).await;
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for h in report["harvest"].as_array().unwrap() {
        assert_eq!(h["errors"].as_array().unwrap().len(), 1);
        assert_eq!(h["records_new"], 0);
    }
}
