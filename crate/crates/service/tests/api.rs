//! Endpoint contract tests driven through the router in-process.

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use workbench_core::id::{Clock, Id, Timestamp};
use workbench_core::kara::{allowed_pos_region, HornPlotConfig, PairwiseComparison, PosAssessment};
use workbench_core::model::Study;
use workbench_core::store::KbOptions;
use workbench_core::workbench::Workbench;
use workbench_service::router;

fn options() -> KbOptions {
    KbOptions {
        seed: Some(5),
        clock: Clock::Fixed(Timestamp::from_unix(1_700_000_000)),
    }
}

fn app(dir: &std::path::Path) -> Router {
    router(Workbench::open(dir, options()).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn call_raw(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn mapping() -> Value {
    json!({
        "kind": "molecule-cation",
        "key_column": "smiles",
        "attributes": [{"column": "lambda_max", "kind": "numeric", "unit": "nm"}]
    })
}

fn csv(n: usize) -> String {
    std::iter::once("smiles,lambda_max".to_string())
        .chain((0..n).map(|i| format!("C{}[S+](C)C,{}", "C".repeat(i), 200 + 5 * i)))
        .collect::<Vec<_>>()
        .join("\n")
}

async fn import(app: &Router, n: usize) -> Value {
    let (status, ds) = call(
        app,
        Method::POST,
        "/datasets/import",
        Some(json!({"name": "seeds", "csv": csv(n), "mapping": mapping()})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{ds}");
    ds
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(
        call(&app, Method::GET, "/health", None).await,
        (StatusCode::OK, json!({"status": "ok"}))
    );
    let (status, err) = call(&app, Method::GET, "/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not-found");
}

#[tokio::test]
async fn study_round_trip_and_idempotent_reads() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, created) = call(
        &app,
        Method::POST,
        "/studies",
        Some(json!({"goal": "find PAG cations", "participants": ["ana"]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let uri = format!("/studies/{}", created["id"].as_str().unwrap());
    let (status, first) = call_raw(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&first).unwrap(), created);
    let (_, second) = call_raw(&app, Method::GET, &uri, None).await;
    assert_eq!(first, second);
    let (_, list) = call(&app, Method::GET, "/studies", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);

    // Durable before the response: a fresh open of the directory sees it.
    let kb = Workbench::open(dir.path(), options()).unwrap();
    let id: Id = created["id"].as_str().unwrap().parse().unwrap();
    assert_eq!(kb.get::<Study>(id).unwrap().goal, "find PAG cations");
}

#[tokio::test]
async fn request_errors_use_api_error_shape() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, err) = call_raw(&app, Method::POST, "/studies", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: Value = serde_json::from_slice(&err).unwrap();
    assert_eq!(err["code"], "malformed-request");
    assert!(err["message"].as_str().is_some());

    let (status, err) = call(&app, Method::POST, "/studies", Some(json!({"goal": "  "}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "empty-goal");

    let missing = format!("/studies/{}", Id::from_u128(42));
    let (status, err) = call(&app, Method::GET, &missing, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown-id");

    let (status, err) = call(&app, Method::GET, "/studies/xyz", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "malformed-request");
}

#[tokio::test]
async fn import_filter_and_dataset_view() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ds = import(&app, 3).await;
    assert_eq!(ids(&ds["member_ids"]).len(), 3);
    let id = ds["id"].as_str().unwrap();
    let (status, view) = call(&app, Method::GET, &format!("/datasets/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["name"], "seeds");
    assert_eq!(view["members"][1]["key"], "CC[S+](C)C");
    assert_eq!(view["members"][1]["attributes"]["lambda_max"]["value"], 205.0);

    let (status, out) = call(
        &app,
        Method::POST,
        &format!("/datasets/{id}/filter"),
        Some(json!({"lines": ["lambda_max >= 205"], "name": "red"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{out}");
    assert_eq!(out["dataset"]["member_ids"].as_array().unwrap().len(), 2);
    assert_eq!(out["excluded_by_clause"], json!([1]));

    let (status, err) = call(&app, Method::POST, &format!("/datasets/{id}/filter"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
}

#[tokio::test]
async fn adjudication_session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ds = import(&app, 4).await;
    let members = ids(&ds["member_ids"]);
    let (status, session) = call(
        &app,
        Method::POST,
        "/adjudication/sessions",
        Some(json!({"dataset": ds["id"]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(session["choices"], json!(["No", "Uncertain", "Yes"]));
    let sid = session["id"].as_str().unwrap();

    let batch = json!({"labels": [
        {"candidate_id": members[0], "expert_id": "ana", "choice": "Yes"},
        {"candidate_id": members[1], "expert_id": "ana", "choice": "No"},
        {"candidate_id": members[2], "expert_id": "ana", "choice": "Uncertain"},
    ]});
    let (status, labels) = call(
        &app,
        Method::POST,
        &format!("/adjudication/sessions/{sid}/labels"),
        Some(batch),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{labels}");
    assert_eq!(labels.as_array().unwrap().len(), 3);
    let one = json!({"candidate_id": members[3], "expert_id": "ana", "choice": "Yes"});
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/adjudication/sessions/{sid}/labels"),
        Some(one),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);

    let bad = json!({"candidate_id": members[3], "expert_id": "ana", "choice": "Maybe"});
    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/adjudication/sessions/{sid}/labels"),
        Some(bad),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("unknown-choice"))
    );

    let (_, metrics) = call(
        &app,
        Method::GET,
        &format!("/adjudication/sessions/{sid}/metrics"),
        None,
    )
    .await;
    assert_eq!(metrics["total"], 4);
    assert_eq!(metrics["counts"], json!({"No": 1, "Uncertain": 1, "Yes": 2}));
    assert_eq!(metrics["acceptance_fraction"], 0.5);

    let (_, view) = call(&app, Method::GET, &format!("/adjudication/sessions/{sid}"), None).await;
    assert_eq!(view["labels"].as_array().unwrap().len(), 4);

    let (status, closed) = call(&app, Method::POST, &format!("/adjudication/sessions/{sid}/close"), None).await;
    assert_eq!((status, closed["status"].as_str()), (StatusCode::OK, Some("closed")));
    let late = json!({"candidate_id": members[0], "expert_id": "bo", "choice": "No"});
    let (status, err) = call(
        &app,
        Method::POST,
        &format!("/adjudication/sessions/{sid}/labels"),
        Some(late),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::CONFLICT, Some("session-closed"))
    );
}

#[tokio::test]
async fn generate_train_rank_reduce() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let seeds = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../demo/seeds.csv")).unwrap();
    let (status, ds) = call(
        &app,
        Method::POST,
        "/datasets/import",
        Some(json!({"name": "seeds", "csv": seeds, "mapping": {"kind": "molecule-cation", "key_column": "smiles"}})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{ds}");
    let (status, gen) = call(
        &app,
        Method::POST,
        "/generate",
        Some(json!({"seed_dataset": ds["id"], "n": 300, "seed": 3})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{gen}");
    assert_eq!(ids(&gen["dataset"]["member_ids"]).len(), 300);

    let (_, session) = call(
        &app,
        Method::POST,
        "/adjudication/sessions",
        Some(json!({"dataset": gen["dataset"]["id"]})),
    )
    .await;
    // Label by whether the key carries an oxygen.
    let (_, view) = call(
        &app,
        Method::GET,
        &format!("/datasets/{}", gen["dataset"]["id"].as_str().unwrap()),
        None,
    )
    .await;
    let labels: Vec<Value> = view["members"]
        .as_array()
        .unwrap()
        .iter()
        .take(120)
        .map(|m| {
            let yes = m["key"].as_str().unwrap().contains('O');
            json!({"candidate_id": m["id"], "expert_id": "ana", "choice": if yes { "Yes" } else { "No" }})
        })
        .collect();
    let sid = session["id"].as_str().unwrap();
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/adjudication/sessions/{sid}/labels"),
        Some(json!({"labels": labels})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);

    let (status, model) = call(
        &app,
        Method::POST,
        "/triage/train",
        Some(json!({"sessions": [sid], "attributes": ["ring_closures", "length"], "config": {"iterations": 200}})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{model}");
    assert_eq!(model["n_examples"], 120);
    assert!(model.get("weights").is_none());

    let (status, ranked) = call(
        &app,
        Method::POST,
        "/triage/rank",
        Some(json!({"model": model["id"], "dataset": gen["dataset"]["id"], "limit": 10})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let ranked = ranked.as_array().unwrap();
    assert_eq!(ranked.len(), 10);
    assert!(ranked
        .windows(2)
        .all(|w| w[0]["score"].as_f64() >= w[1]["score"].as_f64()));

    let (status, reduced) = call(
        &app,
        Method::POST,
        "/triage/reduce",
        Some(json!({"model": model["id"], "dataset": gen["dataset"]["id"], "keep": 0.1})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{reduced}");
    assert_eq!(reduced["member_ids"].as_array().unwrap().len(), 30);
    assert_eq!(reduced["member_ids"][0], ranked[0]["candidate"]);

    let (status, err) = call(
        &app,
        Method::POST,
        "/triage/reduce",
        Some(json!({"model": model["id"], "dataset": gen["dataset"]["id"], "keep": 1.5})),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid-fraction"))
    );
}

/// Sets up a factor with an assessed corpus of six candidates and two
/// unassessed ones; returns (factor id, candidate ids).
async fn kara_setup(app: &Router) -> (String, Vec<String>) {
    let members = ids(&import(app, 8).await["member_ids"]);
    let (status, factor) = call(
        app,
        Method::POST,
        "/kara/risk-factors",
        Some(json!({"name": "toxicity", "questions": [
            {"id": "data", "prompt": "How much data is there?", "kind": {"type": "ordinal", "levels": ["none", "some", "much"]}}
        ]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{factor}");
    let fid = factor["id"].as_str().unwrap().to_string();
    for (i, c) in members.iter().enumerate() {
        let level = ["none", "some", "much"][i % 3];
        let mut body = json!({
            "candidate": c, "risk_factor": fid, "expert": "e1",
            "answers": {"data": level},
        });
        if i < 6 {
            body["assessed_lok"] = json!(0.2 + 0.3 * (i % 3) as f64);
        }
        let (status, a) = call(app, Method::POST, "/kara/answers", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{a}");
    }
    (fid, members)
}

#[tokio::test]
async fn contradictions_come_back_as_409_with_chain() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (fid, c) = kara_setup(&app).await;
    let cmp =
        |a: &str, b: &str, rel: &str| json!({"risk_factor": fid, "expert": "e1", "a": a, "b": b, "relation": rel});
    for (a, b) in [(0, 1), (1, 2)] {
        let (status, _) = call(
            &app,
            Method::POST,
            "/kara/comparisons",
            Some(cmp(&c[a], &c[b], "more-lok")),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (status, err) = call(
        &app,
        Method::POST,
        "/kara/comparisons",
        Some(cmp(&c[2], &c[0], "more-lok")),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "contradiction");
    assert_eq!(err["details"]["chain"], format!("{} ≻ {} ≻ {}", c[0], c[1], c[2]));
    assert_eq!(err["details"]["steps"].as_array().unwrap().len(), 2);

    let (_, listed) = call(
        &app,
        Method::GET,
        &format!("/kara/comparisons?risk_factor={fid}&expert=e1"),
        None,
    )
    .await;
    let listed: Vec<PairwiseComparison> = serde_json::from_value(listed).unwrap();
    assert_eq!(listed.len(), 2);
    assert_eq!(
        (listed[0].a.to_string(), listed[1].a.to_string()),
        (c[0].clone(), c[1].clone())
    );
}

#[tokio::test]
async fn lok_and_pos_flow() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (fid, c) = kara_setup(&app).await;
    let cmp =
        |e: &str, a: &str, b: &str| json!({"risk_factor": fid, "expert": e, "a": a, "b": b, "relation": "more-lok"});
    call(&app, Method::POST, "/kara/comparisons", Some(cmp("e1", &c[6], &c[7]))).await;
    call(&app, Method::POST, "/kara/comparisons", Some(cmp("e2", &c[6], &c[7]))).await;
    call(&app, Method::POST, "/kara/comparisons", Some(cmp("e3", &c[7], &c[6]))).await;

    let (status, consensus) = call(
        &app,
        Method::POST,
        "/kara/consensus-comparisons",
        Some(json!({"risk_factor": fid})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(consensus["cost"], 1);

    let (status, scale) = call(
        &app,
        Method::POST,
        "/kara/calibrate",
        Some(json!({"risk_factor": fid, "scope": {"type": "expert", "expert": "e1"}})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{scale}");
    let lok = scale["values"][&c[6]].as_f64().unwrap();
    let (status, global) = call(&app, Method::POST, "/kara/calibrate", Some(json!({"risk_factor": fid}))).await;
    assert_eq!(status, StatusCode::CREATED, "{global}");

    let (status, err) = call(
        &app,
        Method::POST,
        "/kara/calibrate",
        Some(json!({"risk_factor": fid, "epsilon": 2.0})),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid-config"))
    );

    let (status, region) = call(&app, Method::GET, "/kara/region?lok=1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(region["intervals"].as_array().unwrap().len(), 2);
    let (status, err) = call(&app, Method::GET, "/kara/region?lok=1.5", None).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid-lok"))
    );

    // Out-of-region submission: 422 with the allowed intervals, and the
    // assessment stored as invalid.
    let expected = allowed_pos_region(lok, &HornPlotConfig::default()).unwrap();
    let outside = (expected.intervals.last().unwrap().1 + 1.0) / 2.0;
    let pos = |e: &str, p: f64| json!({"risk_factor": fid, "expert": e, "candidate": c[6], "pos": p});
    let (status, err) = call(&app, Method::POST, "/kara/pos", Some(pos("e1", outside))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "pos-out-of-region");
    let intervals: Vec<(f64, f64)> = serde_json::from_value(err["details"]["intervals"].clone()).unwrap();
    assert_eq!(intervals, expected.intervals);
    let kb = Workbench::open(dir.path(), options()).unwrap();
    let stored = kb
        .get::<PosAssessment>(err["details"]["assessment"].as_str().unwrap().parse().unwrap())
        .unwrap();
    assert!(!stored.valid);
    drop(kb);

    let inside = expected.intervals[0].0;
    let (status, a) = call(&app, Method::POST, "/kara/pos", Some(pos("e1", inside))).await;
    assert_eq!(status, StatusCode::CREATED, "{a}");
    assert_eq!(a["valid"], true);

    let (status, err) = call(&app, Method::POST, "/kara/pos", Some(pos("nobody", 0.5))).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::CONFLICT, Some("not-calibrated"))
    );

    let (status, fin) = call(
        &app,
        Method::POST,
        "/kara/consensus-pos",
        Some(json!({"risk_factor": fid, "candidate": c[6]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{fin}");
    let glok = fin["global_lok"].as_f64().unwrap();
    assert!(allowed_pos_region(glok, &HornPlotConfig::default())
        .unwrap()
        .contains(fin["final_pos"].as_f64().unwrap()));

    let (status, overlay) = call(
        &app,
        Method::GET,
        &format!("/kara/overlay?candidate={}&risk_factor={fid}", c[7]),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{overlay}");
    assert_eq!(overlay[0]["candidate"], c[6].as_str());

    let (status, report) = call(&app, Method::GET, &format!("/kara/report/{}?mode=min", c[6]), None).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["rollup"]["mode"], "min");
    assert_eq!(report["rollup"]["overall"], fin["final_pos"]);
    let (_, again) = call(&app, Method::GET, &format!("/kara/report/{}?mode=min", c[6]), None).await;
    assert_eq!(report, again);
}

#[tokio::test]
async fn evidence_retrieval_and_curation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (fid, _) = kara_setup(&app).await;
    for (text, src) in [
        ("Sulfonium salts show low acute toxicity in rat studies", "tox-review-2019"),
        ("Iodonium photoacid generators absorb at 248 nm", "spectra-handbook"),
    ] {
        let (status, _) = call(
            &app,
            Method::POST,
            "/kara/evidence",
            Some(json!({"text": text, "source": src})),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (status, hits) = call(&app, Method::GET, "/kara/evidence?question=acute%20toxicity&k=2", None).await;
    assert_eq!(status, StatusCode::OK);
    let hits = hits.as_array().unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0]["source"], "tox-review-2019");
    let eid = hits[0]["id"].as_str().unwrap();
    let (status, item) = call(
        &app,
        Method::POST,
        &format!("/kara/evidence/{eid}/curate"),
        Some(json!({"question": "acute toxicity", "verdict": "relevant", "risk_factor": fid, "question_id": "data"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{item}");
    let (_, factors) = call(&app, Method::GET, "/kara/risk-factors", None).await;
    assert_eq!(factors[0]["questions"][0]["evidence_ids"], json!([eid]));
    let (_, after) = call(&app, Method::GET, "/kara/evidence?question=acute%20toxicity&k=2", None).await;
    assert!(after[0]["score"].as_f64() > Some(hits[0]["score"].as_f64().unwrap()));
}

#[tokio::test]
async fn concurrent_writes_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut tasks = Vec::new();
    for i in 0..24 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            call(
                &app,
                Method::POST,
                "/studies",
                Some(json!({"goal": format!("goal {i}")})),
            )
            .await
            .0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let (_, list) = call(&app, Method::GET, "/studies", None).await;
    assert_eq!(list.as_array().unwrap().len(), 24);
    let kb = Workbench::open(dir.path(), options()).unwrap();
    assert_eq!(kb.kb().count::<Study>(), 24);
    kb.kb().check_references().unwrap();
}
