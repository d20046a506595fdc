use std::path::PathBuf;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kes_core::wire::{AllocationResponse, ErrorBody, InstanceSummary, Namespace, ReceiptResponse, SweepResponse};
use kes_service::{router, AppState, ServiceConfig};
use serde::de::DeserializeOwned;
use tower::ServiceExt;

const BOUNDARY: &str = "kes-test-boundary";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(rel: &str) -> Vec<u8> {
    std::fs::read(fixtures().join(rel)).unwrap()
}

fn multipart(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n").as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

fn app() -> Router {
    router(AppState::new(ServiceConfig::default()).unwrap())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn upload(app: &Router, parts: &[(&str, &[u8])]) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/instances")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(parts)))
        .unwrap();
    send(app, req).await
}

async fn get_json<T: DeserializeOwned>(app: &Router, uri: &str) -> (StatusCode, Result<T, ErrorBody>) {
    let (status, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    if status.is_success() {
        (status, Ok(serde_json::from_slice(&body).unwrap()))
    } else {
        (status, Err(serde_json::from_slice(&body).unwrap()))
    }
}

async fn walkthrough(app: &Router) -> String {
    let (status, body) =
        upload(app, &[("pb", &read("pb/valid/walkthrough.pb")), ("groups", &read("pb/valid/walkthrough_groups.csv"))]).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice::<InstanceSummary>(&body).unwrap().id
}

async fn kk25(app: &Router) -> String {
    let (status, body) = upload(
        app,
        &[("pb", &read("kk25/kk25_synthetic.pb")), ("groups", &read("kk25/kk25_synthetic_groups.csv"))],
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice::<InstanceSummary>(&body).unwrap().id
}

#[tokio::test]
async fn walkthrough_allocation_funds_b() {
    let app = app();
    let id = walkthrough(&app).await;
    let (status, resp) = get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation?split_r=0.5")).await;
    assert_eq!(status, StatusCode::OK);
    let resp = resp.unwrap();
    assert_eq!(resp.result.funded, vec!["B"]);
    assert_eq!(resp.namespace, Namespace::Scenario);
    let (_, official) = get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation")).await;
    let official = official.unwrap();
    assert_eq!(official.namespace, Namespace::Official);
    assert_eq!(official.result, resp.result);
    assert_eq!(official.stats.project_count, 1);
    assert_eq!(official.scores.len(), 2);
}

#[tokio::test]
async fn upload_is_idempotent_and_reports_summary() {
    let app = app();
    let a = walkthrough(&app).await;
    let b = walkthrough(&app).await;
    assert_eq!(a, b);
    let (_, summary) = get_json::<InstanceSummary>(&app, &format!("/instances/{a}")).await;
    let summary = summary.unwrap();
    assert_eq!((summary.projects, summary.individuals, summary.fields), (2, 2, 1));
}

#[tokio::test]
async fn non_canonical_bytes_hash_like_canonical_ones() {
    let app = app();
    let canonical = read("pb/valid/minimal.pb");
    let crlf = String::from_utf8(canonical.clone()).unwrap().replace('\n', "\r\n");
    let (_, a) = upload(&app, &[("pb", &canonical)]).await;
    let (_, b) = upload(&app, &[("pb", crlf.as_bytes())]).await;
    let a: InstanceSummary = serde_json::from_slice(&a).unwrap();
    let b: InstanceSummary = serde_json::from_slice(&b).unwrap();
    assert_eq!(a.id, b.id);
}

#[tokio::test]
async fn malformed_upload_is_rejected_with_line() {
    let app = app();
    let (status, body) = upload(&app, &[("pb", &read("pb/malformed/01_points_length_mismatch.pb"))]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.error, "MalformedRow");
    assert_eq!(err.line, Some(13));

    let (status, _) = upload(&app, &[("groups", b"field,project,points\n")]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_config_part_is_unprocessable() {
    let app = app();
    let (status, body) =
        upload(&app, &[("pb", &read("pb/valid/walkthrough.pb")), ("config", br#"{"split_r":"1.3"}"#)]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.error, "InvalidSplit");
}

#[tokio::test]
async fn oversized_upload_is_413() {
    let app = router(AppState::new(ServiceConfig { fixtures_dir: None, body_limit: 1024 }).unwrap());
    let big = vec![b'x'; 4096];
    let (status, _) = upload(&app, &[("pb", &big)]).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn unknown_ids_and_bad_overrides() {
    let app = app();
    let (status, err) = get_json::<AllocationResponse>(&app, "/instances/nope/allocation").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err.unwrap_err().error, "UnknownInstance");
    let id = walkthrough(&app).await;
    for query in ["split_r=1.3", "budget=-5", "budget=1.005", "rule=borda", "weights=f", "weights=zz:1"] {
        let (status, _) = get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation?{query}")).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{query}");
    }
}

#[tokio::test]
async fn receipts_surface_agent_kind() {
    let app = app();
    let id = walkthrough(&app).await;
    let (status, resp) = get_json::<ReceiptResponse>(&app, &format!("/instances/{id}/receipts/f")).await;
    assert_eq!(status, StatusCode::OK);
    let resp = resp.unwrap();
    let json = serde_json::to_value(&resp).unwrap();
    assert_eq!(json["kind"], "field");
    assert_eq!(resp.receipt.lines.len(), 1);
    assert_eq!(resp.receipt.lines[0].project, "B");
    assert_eq!(resp.receipt.lines[0].amount.to_string(), "20.00");
    assert_eq!(resp.receipt.leftover.to_string(), "30.00");

    let (status, err) = get_json::<ReceiptResponse>(&app, &format!("/instances/{id}/receipts/ghost")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err.unwrap_err().error, "UnknownAgent");
}

#[tokio::test]
async fn split_sweep_endpoints_match_single_calls() {
    let app = app();
    let id = walkthrough(&app).await;
    let (status, sweep) =
        get_json::<SweepResponse>(&app, &format!("/instances/{id}/sweep?param=split_r&from=0&to=1&steps=2")).await;
    assert_eq!(status, StatusCode::OK);
    let sweep = sweep.unwrap();
    assert_eq!(sweep.points.iter().map(|p| p.value.as_str()).collect::<Vec<_>>(), vec!["0", "1"]);
    for point in &sweep.points {
        let (_, single) =
            get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation?split_r={}", point.value)).await;
        let single = single.unwrap();
        assert_eq!(single.stats, point.stats);
        assert_eq!(single.result.funded, point.funded);
    }
}

#[tokio::test]
async fn budget_sweep_is_pointwise_equal_on_kk25() {
    let app = app();
    let id = kk25(&app).await;
    let uri = format!("/instances/{id}/sweep?param=total_budget&from=100000&to=500000&steps=9&rule=kes");
    let (status, sweep) = get_json::<SweepResponse>(&app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    let sweep = sweep.unwrap();
    assert_eq!(sweep.points.len(), 9);
    assert_eq!(sweep.points[1].value, "150000.00");
    for point in &sweep.points {
        let (_, single) = get_json::<AllocationResponse>(
            &app,
            &format!("/instances/{id}/allocation?rule=kes&budget={}", point.value),
        )
        .await;
        let single = single.unwrap();
        assert_eq!(single.stats, point.stats);
        assert_eq!(single.result.funded, point.funded);
    }
}

#[tokio::test]
async fn sweep_rejects_bad_ranges() {
    let app = app();
    let id = walkthrough(&app).await;
    for query in [
        "param=split_r&from=0&to=1&steps=0",
        "param=split_r&from=0&to=1&steps=202",
        "param=split_r&from=1&to=0&steps=3",
        "param=cost&from=0&to=1&steps=3",
        "param=split_r&from=0&steps=3",
        "param=split_r&from=0&to=2&steps=3",
    ] {
        let (status, _) = get_json::<SweepResponse>(&app, &format!("/instances/{id}/sweep?{query}")).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{query}");
    }
}

#[tokio::test]
async fn greedy_is_costlier_than_kes_on_mean() {
    let app = app();
    let id = kk25(&app).await;
    let (_, kes) = get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation?rule=kes")).await;
    let (_, greedy) = get_json::<AllocationResponse>(&app, &format!("/instances/{id}/allocation?rule=greedy-ind")).await;
    let (kes, greedy) = (kes.unwrap(), greedy.unwrap());
    assert!(greedy.stats.mean_cost > kes.stats.mean_cost);
}

#[tokio::test]
async fn frozen_instances_pin_the_official_result() {
    let app = app();
    let pb = read("pb/valid/walkthrough.pb");
    let groups = read("pb/valid/walkthrough_groups.csv");
    let (_, body) = upload(&app, &[("pb", &pb), ("groups", &groups), ("config", br#"{"frozen":true}"#)]).await;
    let summary: InstanceSummary = serde_json::from_slice(&body).unwrap();
    assert!(summary.frozen);
    let plain = walkthrough(&app).await;
    assert_ne!(summary.id, plain);
    let (_, what_if) =
        get_json::<AllocationResponse>(&app, &format!("/instances/{}/allocation?split_r=0", summary.id)).await;
    assert_eq!(what_if.unwrap().namespace, Namespace::Scenario);
    let (_, official) = get_json::<AllocationResponse>(&app, &format!("/instances/{}/allocation", summary.id)).await;
    let official = official.unwrap();
    assert_eq!(official.namespace, Namespace::Official);
    assert_eq!(official.result.funded, vec!["B"]);
}

#[tokio::test]
async fn concurrent_identical_queries_agree() {
    let app = app();
    let id = kk25(&app).await;
    let uri = format!("/instances/{id}/allocation?budget=250000&split_r=1/3");
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, uri) = (app.clone(), uri.clone());
            tokio::spawn(async move { send(&app, Request::get(uri).body(Body::empty()).unwrap()).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn fixtures_dir_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { fixtures_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let first = router(AppState::new(config.clone()).unwrap());
    let id = kk25(&first).await;
    let uri = format!("/instances/{id}/allocation?rule=mes");
    let (_, before) = send(&first, Request::get(&uri).body(Body::empty()).unwrap()).await;
    drop(first);

    let second = router(AppState::new(config).unwrap());
    let (status, after) = send(&second, Request::get(&uri).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
}

#[tokio::test]
async fn kk25_allocation_latency() {
    let app = app();
    let id = kk25(&app).await;
    let mut times = Vec::new();
    for k in 0..20 {
        let start = Instant::now();
        let uri = format!("/instances/{id}/allocation?budget={}", 300_000 + 1_000 * k);
        let (status, _) = send(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        times.push(start.elapsed());
    }
    times.sort();
    assert!(times[18].as_secs_f64() < 2.0, "p95 {:?}", times[18]);
}
