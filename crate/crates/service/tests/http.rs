use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use direct_core::engine::Experiment;
use direct_core::harness::config::{ExperimentConfig, PoolSource, ScorerConfig};
use direct_core::harness::run_experiment;
use direct_core::pool::{LabelSource, Pool, SyntheticSpec};
use direct_service::api::{BatchDoc, CreateResponse, PhaseKind, StateDoc, Status};
use direct_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(strategy: &str, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        strategy: strategy.into(),
        rounds: 3,
        b_train: 24,
        b_parallel: 4,
        seed,
        eta: 0.1,
        noise_seed: None,
        holdout_fraction: 0.2,
        output_dir: None,
        pool: PoolSource::Synthetic(SyntheticSpec { counts: vec![40, 160], dim: 3, separation: 2.0, seed }),
        scorer: ScorerConfig { epochs: 60, ..ScorerConfig::default() },
    }
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn json_call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(state: &AppState, config: &ExperimentConfig) -> CreateResponse {
    let (status, body) = json_call(state, "POST", "/sessions", Some(json!({ "config": config }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    serde_json::from_value(body).unwrap()
}

async fn batch(state: &AppState, id: &str) -> BatchDoc {
    let (status, body) = json_call(state, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

async fn session_state(state: &AppState, id: &str) -> StateDoc {
    let (status, body) = json_call(state, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

fn oracle_labels(pool: &Pool, doc: &BatchDoc) -> Value {
    let labels: Vec<Value> =
        doc.items.iter().map(|it| json!({ "id": it.id, "class": pool.example(it.id).observed_label + 1 })).collect();
    json!({ "labels": labels, "annotator": "script" })
}

fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or("")
}

/// Answers every batch with the observed label; returns the batches seen.
async fn drive(state: &AppState, id: &str, pool: &Pool, limit: Option<usize>) -> Vec<Vec<usize>> {
    let mut seen = Vec::new();
    loop {
        if limit.is_some_and(|l| seen.len() >= l) {
            return seen;
        }
        let doc = batch(state, id).await;
        if doc.status == Status::Complete {
            assert!(doc.items.is_empty());
            return seen;
        }
        seen.push(doc.items.iter().map(|i| i.id).collect());
        let (status, body) = json_call(state, "POST", &format!("/sessions/{id}/labels"), Some(oracle_labels(pool, &doc))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
}

fn simulator_batches(config: &ExperimentConfig) -> (Experiment, Vec<Vec<usize>>) {
    let mut exp = config.prepare().unwrap().start().unwrap();
    let mut batches = Vec::new();
    while let Some(b) = exp.pending().map(<[usize]>::to_vec) {
        let labels: Vec<_> = b.iter().map(|&id| (id, exp.pool().example(id).observed_label)).collect();
        exp.submit(&labels, LabelSource::Oracle).unwrap();
        batches.push(b);
    }
    (exp, batches)
}

#[tokio::test]
async fn fresh_session_offers_a_seed_batch() {
    let state = AppState::in_memory();
    let cfg = config("direct", 1);
    let created = create(&state, &cfg).await;
    assert_eq!(created.state.round, 0);
    assert_eq!(created.state.pending, 4);
    assert_eq!(created.state.labeled, 0);
    assert_eq!(created.state.class_counts, vec![0, 0]);
    assert_eq!(created.state.phase.kind, PhaseKind::Seed);
    let doc = batch(&state, &created.id).await;
    assert_eq!(doc.items.len(), 4);
    let reference = cfg.prepare().unwrap().start().unwrap();
    let ids: Vec<usize> = doc.items.iter().map(|i| i.id).collect();
    assert_eq!(ids, reference.pending().unwrap());
    assert_eq!(doc.items[0].features, reference.pool().example(ids[0]).features);
    // Re-fetching does not change the batch.
    assert_eq!(batch(&state, &created.id).await, doc);
}

#[tokio::test]
async fn bad_configs_name_the_field() {
    let state = AppState::in_memory();
    let mut cfg = config("direct", 1);
    cfg.b_parallel = 30;
    let (status, body) = json_call(&state, "POST", "/sessions", Some(json!({ "config": cfg }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "invalid_config");
    assert_eq!(body["error"]["field"], "b_parallel");

    let mut raw = serde_json::to_value(config("direct", 1)).unwrap();
    raw.as_object_mut().unwrap().remove("b_train");
    let (status, body) = json_call(&state, "POST", "/sessions", Some(json!({ "config": raw }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "b_train");

    let cfg = config("no_such_strategy", 1);
    let (_, body) = json_call(&state, "POST", "/sessions", Some(json!({ "config": cfg }))).await;
    assert_eq!(body["error"]["field"], "strategy");

    let mut cfg = config("direct", 1);
    cfg.pool = PoolSource::Path("/nonexistent/pool.jsonl".into());
    let (status, body) = json_call(&state, "POST", "/sessions", Some(json!({ "config": cfg }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "pool");

    let (status, body) = call(&state, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(error_code(&body), "invalid_request");
    assert_eq!(state.session_count(), 0);
}

#[tokio::test]
async fn repeated_token_returns_the_same_session() {
    let state = AppState::in_memory();
    let cfg = config("random", 2);
    let body = json!({ "config": cfg, "idempotency_token": "abc" });
    let (first_status, first) = json_call(&state, "POST", "/sessions", Some(body.clone())).await;
    let (second_status, second) = json_call(&state, "POST", "/sessions", Some(body)).await;
    assert_eq!(first_status, StatusCode::CREATED);
    assert_eq!(second_status, StatusCode::OK);
    assert_eq!(first["id"], second["id"]);
    assert_eq!(state.session_count(), 1);

    let other = json!({ "config": config("random", 3), "idempotency_token": "abc" });
    let (status, body) = json_call(&state, "POST", "/sessions", Some(other)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&body), "idempotency_conflict");
}

#[tokio::test]
async fn rejected_submissions_change_nothing() {
    let state = AppState::in_memory();
    let cfg = config("direct", 4);
    let pool = cfg.prepare().unwrap().pool;
    let id = create(&state, &cfg).await.id;
    let doc = batch(&state, &id).await;
    let uri = format!("/sessions/{id}/labels");
    let full = oracle_labels(&pool, &doc);

    let mut partial = full.clone();
    partial["labels"].as_array_mut().unwrap().pop();
    let (status, body) = json_call(&state, "POST", &uri, Some(partial)).await;
    assert_eq!((status, error_code(&body)), (StatusCode::CONFLICT, "batch_mismatch"));

    let foreign = (0..pool.len()).find(|i| doc.items.iter().all(|it| it.id != *i)).unwrap();
    let mut wrong = full.clone();
    wrong["labels"][0]["id"] = json!(foreign);
    let (status, body) = json_call(&state, "POST", &uri, Some(wrong)).await;
    assert_eq!((status, error_code(&body)), (StatusCode::CONFLICT, "batch_mismatch"));

    let mut doubled = full.clone();
    doubled["labels"][1]["id"] = doubled["labels"][0]["id"].clone();
    let (status, _) = json_call(&state, "POST", &uri, Some(doubled)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    for class in [0, 3] {
        let mut bad = full.clone();
        bad["labels"][0]["class"] = json!(class);
        let (status, body) = json_call(&state, "POST", &uri, Some(bad)).await;
        assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "invalid_label"));
    }

    let (status, body) = json_call(&state, "POST", &uri, Some(json!({ "labels": "nope" }))).await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "invalid_request"));

    let after = session_state(&state, &id).await;
    assert_eq!(after.labeled, 0);
    assert_eq!(batch(&state, &id).await, doc);

    let (status, body) = json_call(&state, "POST", &uri, Some(full)).await;
    assert_eq!(status, StatusCode::OK);
    let doc: StateDoc = serde_json::from_value(body).unwrap();
    assert_eq!(doc.labeled, 4);
    assert_eq!(doc.class_counts.iter().sum::<usize>(), 4);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let state = AppState::in_memory();
    for (method, path) in [("GET", "batch"), ("GET", "state"), ("GET", "log"), ("POST", "labels")] {
        let body = (method == "POST").then(|| json!({ "labels": [] }));
        let (status, body) = json_call(&state, method, &format!("/sessions/nope/{path}"), body).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(error_code(&body), "not_found");
    }
}

#[tokio::test]
async fn scripted_client_reproduces_the_simulator() {
    for strategy in ["direct", "galaxy_bisection", "confidence"] {
        let state = AppState::in_memory();
        let cfg = config(strategy, 5);
        let pool = cfg.prepare().unwrap().pool;
        let id = create(&state, &cfg).await.id;
        let seen = drive(&state, &id, &pool, None).await;
        let (_, expected) = simulator_batches(&cfg);
        assert_eq!(seen, expected, "{strategy}");
        assert!(seen.iter().all(|b| b.len() <= cfg.b_parallel));

        let (status, csv) = call(&state, "GET", &format!("/sessions/{id}/log"), None).await;
        assert_eq!(status, StatusCode::OK);
        let reference = run_experiment(&cfg).unwrap().to_csv_string().unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), reference, "{strategy}");

        let done = batch(&state, &id).await;
        assert_eq!(done.status, Status::Complete);
        assert!(done.items.is_empty());
        let (status, body) = json_call(&state, "POST", &format!("/sessions/{id}/labels"), Some(json!({ "labels": [] }))).await;
        assert_eq!((status, error_code(&body)), (StatusCode::CONFLICT, "session_complete"));
    }
}

#[tokio::test]
async fn locate_batches_come_from_the_active_version_space() {
    let state = AppState::in_memory();
    let cfg = config("direct", 6);
    let pool = cfg.prepare().unwrap().pool;
    let id = create(&state, &cfg).await.id;
    // Drive through the seed round (6 batches of 4) and into round 1.
    drive(&state, &id, &pool, Some(6)).await;
    let doc = batch(&state, &id).await;
    assert_eq!(doc.round, 1);
    assert_eq!(doc.phase.kind, PhaseKind::Locate);
    let class = doc.phase.class.expect("a class is being located");
    assert!((1..=2).contains(&class));
    let (_, expected) = simulator_batches(&cfg);
    let ids: Vec<usize> = doc.items.iter().map(|i| i.id).collect();
    assert_eq!(ids, expected[6]);
}

#[tokio::test]
async fn counts_sum_to_the_round_budget() {
    let state = AppState::in_memory();
    let cfg = config("direct", 7);
    let pool = cfg.prepare().unwrap().pool;
    let id = create(&state, &cfg).await.id;
    drive(&state, &id, &pool, Some(6)).await;
    let doc = session_state(&state, &id).await;
    assert_eq!(doc.round, 1);
    assert_eq!(doc.labeled, 24);
    assert_eq!(doc.class_counts.iter().sum::<usize>(), 24);
    assert!(doc.thresholds.iter().all(Option::is_some));
    assert!((doc.progress - 24.0 / 72.0).abs() < 1e-12);
}

#[tokio::test]
async fn reload_restores_state_and_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("direct", 8);
    let pool = cfg.prepare().unwrap().pool;
    let state = AppState::open(dir.path()).unwrap();
    let body = json!({ "config": cfg, "idempotency_token": "tok" });
    let (_, created) = json_call(&state, "POST", "/sessions", Some(body.clone())).await;
    let id = created["id"].as_str().unwrap().to_string();
    drive(&state, &id, &pool, Some(9)).await;
    let before_state = session_state(&state, &id).await;
    let before_batch = batch(&state, &id).await;
    drop(state);

    let reloaded = AppState::open(dir.path()).unwrap();
    assert_eq!(session_state(&reloaded, &id).await, before_state);
    assert_eq!(batch(&reloaded, &id).await, before_batch);
    let (status, again) = json_call(&reloaded, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["id"], id.as_str());

    drive(&reloaded, &id, &pool, None).await;
    let (_, csv) = call(&reloaded, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(String::from_utf8(csv).unwrap(), run_experiment(&cfg).unwrap().to_csv_string().unwrap());

    let handle = reloaded.get(&id).unwrap();
    let session = handle.lock().await;
    let ids: std::collections::HashSet<usize> = session.journal().iter().map(|e| e.id).collect();
    assert_eq!(ids.len(), session.journal().len());
    assert!(session.journal().iter().all(|e| e.annotator.as_deref() == Some("script")));
}

#[tokio::test]
async fn sessions_progress_independently() {
    let state = AppState::in_memory();
    let a_cfg = config("direct", 9);
    let b_cfg = config("random", 10);
    let a = create(&state, &a_cfg).await.id;
    let b = create(&state, &b_cfg).await.id;
    let a_pool = a_cfg.prepare().unwrap().pool;
    let b_pool = b_cfg.prepare().unwrap().pool;
    let (sa, sb) = tokio::join!(drive(&state, &a, &a_pool, None), drive(&state, &b, &b_pool, None));
    assert_eq!(sa, simulator_batches(&a_cfg).1);
    assert_eq!(sb, simulator_batches(&b_cfg).1);
}
