use std::collections::BTreeSet;
use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use gesteval::analysis::leaderboard_from_log;
use gesteval::model::{
    serialize_log, Condition, ConditionKind, RatingReport, Registry, Segment, StudyLog,
};
use gesteval::rating::EloConfig;
use gesteval::simulate::{simulate_alignment_votes, simulate_realism_votes, PlantedTruth};
use gesteval_service::api::{AdaptiveView, BulkResult, PageView, SessionView, StudySummary, SubmitResult};
use gesteval_service::error::ErrorBody;
use gesteval_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const NAMES: [(&str, &str); 4] = [
    ("hifi", "HiFi Gesture Net"),
    ("diffgest", "DiffGest Model"),
    ("groundtruth", "Ground Truth Capture"),
    ("baseline", "Simple Baseline"),
];

fn registry(speakers: usize, per_speaker: usize) -> Registry {
    let conditions = NAMES
        .iter()
        .map(|(id, name)| Condition {
            id: (*id).into(),
            display_name: (*name).into(),
            kind: if *id == "groundtruth" { ConditionKind::Mocap } else { ConditionKind::Generative },
            seeds_available: 1,
        })
        .collect();
    let segments = (0..speakers)
        .flat_map(|sp| {
            (0..per_speaker).map(move |i| Segment {
                id: format!("seg-{sp}-{i}").into(),
                speaker_id: format!("spk{sp}"),
                take_id: None,
                start_s: i as f64 * 20.0,
                end_s: i as f64 * 20.0 + 10.0,
                transcript: "Some words.".into(),
                complete_sentences: Some(true),
                artifact_flags: BTreeSet::new(),
            })
        })
        .collect();
    Registry {
        conditions,
        segments,
        stimuli: vec![],
    }
}

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    }
}

struct Client {
    state: AppState,
}

impl Client {
    fn open(dir: &Path) -> Self {
        Self {
            state: AppState::open(config(dir)).unwrap(),
        }
    }

    async fn raw(&self, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = router(self.state.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body.map(|b| b.to_string())).await;
        let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, v)
    }

    async fn ok<T: serde::de::DeserializeOwned>(&self, method: Method, uri: &str, body: Option<Value>) -> T {
        let (status, v) = self.json(method, uri, body).await;
        assert!(status.is_success(), "{uri}: {status} {v}");
        serde_json::from_value(v).unwrap()
    }

    async fn err(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, ErrorBody) {
        let (status, v) = self.json(method, uri, body).await;
        assert!(!status.is_success(), "{uri}: expected failure, got {v}");
        (status, serde_json::from_value(v).unwrap())
    }
}

fn realism_request(id: &str) -> Value {
    json!({ "study_id": id, "kind": "realism", "seed": 7, "registry": registry(1, 6) })
}

fn alignment_request(id: &str) -> Value {
    json!({ "study_id": id, "kind": "alignment", "seed": 7, "registry": registry(2, 4) })
}

fn answer(response: &str) -> Value {
    if response == "tie" {
        json!({ "response": "tie" })
    } else {
        json!({ "response": response, "juice_options": ["other"], "juice_other_text": "odd" })
    }
}

#[tokio::test]
async fn study_creation_validates_and_refuses_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let (status, v) = c.json(Method::POST, "/studies", Some(realism_request("r1"))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let s: StudySummary = serde_json::from_value(v).unwrap();
    assert_eq!(s.n_conditions, 4);
    assert_eq!(s.session.length, 25);
    assert_eq!(s.pool_size, 6 * 6);

    let (status, _) = c.err(Method::POST, "/studies", Some(realism_request("r1"))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, e) = c.err(Method::POST, "/studies", Some(realism_request("../up"))).await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("study_id")));

    let (status, e) = c
        .err(Method::POST, "/studies", Some(json!({ "study_id": "r2", "kind": "realism" })))
        .await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("registry")));

    let mut bad = realism_request("r3");
    bad["session"] = json!({ "length": 4 });
    let (status, _) = c.err(Method::POST, "/studies", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let mut bad = realism_request("r4");
    bad["kind"] = json!("vibes");
    let (status, e) = c.err(Method::POST, "/studies", Some(bad)).await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("kind")));

    let (status, _) = c.err(Method::GET, "/studies/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let ids: Vec<String> = c.ok(Method::GET, "/studies", None).await;
    assert_eq!(ids, vec!["r1".to_string()]);
}

#[tokio::test]
async fn locators_that_name_a_condition_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let mut req = realism_request("leaky");
    req["uri_prefix"] = json!("media/hifi");
    let (status, e) = c.err(Method::POST, "/studies", Some(req)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e.field.unwrap().ends_with("video_uri"));
}

#[tokio::test]
async fn page_lifecycle_and_error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;

    let s: SessionView = c.ok(Method::GET, "/sessions/next?study=r&taker=alice", None).await;
    assert_eq!(s.total_pages, 25);
    assert_eq!(s.next_page, Some(1));
    assert_eq!(s.response_options.len(), 5);
    assert!(!s.question.is_empty());
    let again: SessionView = c.ok(Method::GET, "/sessions/next?study=r&taker=alice", None).await;
    assert_eq!(again.session_id, s.session_id, "an unfinished session resumes");
    // With a single study the parameter may be omitted.
    let bob: SessionView = c.ok(Method::GET, "/sessions/next?taker=bob", None).await;
    assert_ne!(bob.session_id, s.session_id);

    let sid = s.session_id.as_str().to_string();
    let page: PageView = c.ok(Method::GET, &format!("/sessions/{sid}/pages/1"), None).await;
    assert!(!page.answered);

    let (status, e) = c
        .err(Method::POST, &format!("/sessions/{sid}/pages/1"), Some(json!({ "response": "left_clear" })))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e.field.unwrap().contains("juice"), "non-tie answers need a reason");
    let (status, e) = c
        .err(Method::POST, &format!("/sessions/{sid}/pages/1"), Some(json!({ "response": "maybe" })))
        .await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("response")));

    let r: SubmitResult = c.ok(Method::POST, &format!("/sessions/{sid}/pages/1"), Some(answer("tie"))).await;
    assert_eq!(r.next_page, Some(2));
    let (status, _) = c.err(Method::POST, &format!("/sessions/{sid}/pages/1"), Some(answer("tie"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = c.err(Method::GET, &format!("/sessions/{sid}/pages/26"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = c.err(Method::POST, &format!("/sessions/{sid}/pages/0"), Some(answer("tie"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = c.err(Method::GET, "/sessions/zzz/pages/1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    for n in 2..=25 {
        let page: PageView = c.ok(Method::GET, &format!("/sessions/{sid}/pages/{n}"), None).await;
        c.ok::<SubmitResult>(Method::POST, &format!("/sessions/{sid}/pages/{n}"), Some(answer(&attention_target(&page))))
            .await;
    }
    let done: SessionView = c.ok(Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(done.next_page, None);
    let (status, _) = c.err(Method::GET, "/sessions/next?study=r&taker=alice", None).await;
    assert_eq!(status, StatusCode::CONFLICT, "a finished taker cannot start again");
    let (status, _) = c.err(Method::POST, &format!("/sessions/{sid}/pages/3"), Some(answer("tie"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

/// The answer an attentive taker gives: what the check asks for, else a tie.
fn attention_target(page: &PageView) -> String {
    for v in [&page.left, &page.right] {
        if let Some(text) = &v.overlay_text {
            for c in &page.response_options {
                if text.contains(&c.label) {
                    return c.value.clone();
                }
            }
        }
        if let Some(uri) = &v.audio_uri {
            let digit = uri.chars().find(|c| c.is_ascii_digit()).unwrap();
            let likert = digit.to_digit(10).unwrap() as usize;
            return page.response_options[likert - 1].value.clone();
        }
    }
    "tie".into()
}

#[tokio::test]
async fn skips_end_a_session_on_the_fourth() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;
    let s: SessionView = c.ok(Method::GET, "/sessions/next?taker=t", None).await;
    let sid = s.session_id.as_str();
    let mut last = None;
    for n in 1..=4 {
        let r: SubmitResult = c
            .ok(Method::POST, &format!("/sessions/{sid}/pages/{n}"), Some(json!({ "skipped": true })))
            .await;
        last = Some(r);
    }
    let last = last.unwrap();
    assert_eq!(last.status, gesteval_service::api::PublicStatus::Terminated);
    assert_eq!(last.next_page, None);
    let (status, _) = c.err(Method::POST, &format!("/sessions/{sid}/pages/6"), Some(answer("tie"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

fn assert_blind(text: &str) {
    let lower = text.to_lowercase();
    for (id, name) in NAMES {
        assert!(!lower.contains(id), "{id} leaked: {text}");
        assert!(!lower.contains(&name.to_lowercase()), "{name} leaked: {text}");
    }
    for word in ["\"matched", "mismatch", "mocap", "condition", "audio_segment", "seg-", "spk"] {
        assert!(!lower.contains(word), "{word} leaked: {text}");
    }
}

#[tokio::test]
async fn taker_payloads_never_reveal_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("rb"))).await;
    c.ok::<StudySummary>(Method::POST, "/studies", Some(alignment_request("ab"))).await;
    let mut audio_checks = 0;
    let mut visual_checks = 0;
    for study in ["rb", "ab"] {
        for taker in 0..3 {
            let (_, body) = c.raw(Method::GET, &format!("/sessions/next?study={study}&taker=w{taker}"), None).await;
            let text = String::from_utf8(body).unwrap();
            assert_blind(&text);
            let s: SessionView = serde_json::from_str(&text).unwrap();
            let sid = s.session_id.as_str();
            for n in 1..=s.total_pages {
                let (_, body) = c.raw(Method::GET, &format!("/sessions/{sid}/pages/{n}"), None).await;
                let text = String::from_utf8(body).unwrap();
                assert_blind(&text);
                let page: PageView = serde_json::from_str(&text).unwrap();
                if study == "rb" {
                    assert!(page.left.muted && page.right.muted);
                }
                let overlays = [&page.left, &page.right].iter().filter(|v| v.overlay_text.is_some()).count();
                let audios = [&page.left, &page.right].iter().filter(|v| v.audio_uri.is_some()).count();
                assert!(overlays + audios <= 1);
                visual_checks += overlays;
                audio_checks += audios;
                let (_, body) = c
                    .raw(
                        Method::POST,
                        &format!("/sessions/{sid}/pages/{n}"),
                        Some(answer(&attention_target(&page)).to_string()),
                    )
                    .await;
                assert_blind(&String::from_utf8(body).unwrap());
            }
        }
    }
    // Realism: 4 visual per session; alignment: 2 audio + 2 visual.
    assert_eq!(visual_checks, 3 * 4 + 3 * 2);
    assert_eq!(audio_checks, 3 * 2);
}

#[tokio::test]
async fn empty_reports_are_explicit_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;
    c.ok::<StudySummary>(Method::POST, "/studies", Some(alignment_request("a"))).await;
    let (status, e) = c.err(Method::GET, "/studies/r/leaderboard", None).await;
    assert_eq!((status, e.kind.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "computation"));
    let (status, _) = c.err(Method::GET, "/studies/a/appropriateness", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, e) = c.err(Method::GET, "/studies/a/leaderboard", None).await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("kind")));
    let (status, e) = c.err(Method::GET, "/studies/r/leaderboard?n_bootstrap=lots", None).await;
    assert_eq!((status, e.field.as_deref()), (StatusCode::UNPROCESSABLE_ENTITY, Some("query")));
}

fn truth() -> PlantedTruth {
    PlantedTruth {
        realism_ratings: [("hifi".into(), 1133.0), ("diffgest".into(), 1000.0), ("baseline".into(), 701.0)].into(),
        alignment_p: [("hifi".into(), 0.74), ("baseline".into(), 0.5)].into(),
        rng_seed: 3,
        ..PlantedTruth::default()
    }
}

#[tokio::test]
async fn bulk_ingest_matches_offline_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;
    c.ok::<StudySummary>(Method::POST, "/studies", Some(alignment_request("a"))).await;

    let sim = simulate_realism_votes(&truth(), 120).unwrap();
    let text = serialize_log(&sim.entries).unwrap();
    let (status, body) = c.raw(Method::POST, "/studies/r/votes/bulk", Some(text.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let res: BulkResult = serde_json::from_slice(&body).unwrap();
    assert_eq!(res.votes_added, 3 * 120);

    let served: RatingReport = c.ok(Method::GET, "/studies/r/leaderboard?seed=11&n_bootstrap=300", None).await;
    let offline = leaderboard_from_log(
        &StudyLog::parse(&text).unwrap(),
        &EloConfig { rng_seed: 11, n_bootstrap: 300, ..EloConfig::default() },
    )
    .unwrap();
    assert_eq!(served, offline);
    let (status, csv) = c.raw(Method::GET, "/studies/r/leaderboard?seed=11&n_bootstrap=300&format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap(), gesteval::analysis::report_to_csv(&offline));

    // Re-sending the same votes is a duplicate and changes nothing.
    let (status, _) = c.raw(Method::POST, "/studies/r/votes/bulk", Some(text)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let s: StudySummary = c.ok(Method::GET, "/studies/r", None).await;
    assert_eq!(s.votes, 360);

    // Alignment records do not belong in a realism study.
    let al = serialize_log(&simulate_alignment_votes(&truth(), 3, 21).unwrap().entries).unwrap();
    let (status, _) = c.raw(Method::POST, "/studies/r/votes/bulk", Some(al.clone())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = c.raw(Method::POST, "/studies/a/votes/bulk", Some(al)).await;
    assert_eq!(status, StatusCode::OK);
    let report: RatingReport = c.ok(Method::GET, "/studies/a/appropriateness?n_bootstrap=50", None).await;
    assert_eq!(report.conditions.len(), 2);
    let juice: Value = c.ok(Method::GET, "/studies/a/juice?normalization=option_share", None).await;
    assert_eq!(juice.as_array().unwrap().len(), 2);
    let (status, _) = c.raw(Method::GET, "/studies/a/juice?format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn restart_replays_sessions_and_votes() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, before, report) = {
        let c = Client::open(dir.path());
        c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;
        let bulk = serialize_log(&simulate_realism_votes(&truth(), 40).unwrap().entries).unwrap();
        c.raw(Method::POST, "/studies/r/votes/bulk", Some(bulk)).await;
        let s: SessionView = c.ok(Method::GET, "/sessions/next?taker=t1", None).await;
        let sid = s.session_id.as_str().to_string();
        for n in 1..=10 {
            let page: PageView = c.ok(Method::GET, &format!("/sessions/{sid}/pages/{n}"), None).await;
            c.ok::<SubmitResult>(Method::POST, &format!("/sessions/{sid}/pages/{n}"), Some(answer(&attention_target(&page))))
                .await;
        }
        let before: SessionView = c.ok(Method::GET, &format!("/sessions/{sid}"), None).await;
        let report: RatingReport = c.ok(Method::GET, "/studies/r/leaderboard?n_bootstrap=100", None).await;
        (sid, before, report)
    };

    let c = Client::open(dir.path());
    let after: SessionView = c.ok(Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(after, before);
    let again: RatingReport = c.ok(Method::GET, "/studies/r/leaderboard?n_bootstrap=100", None).await;
    assert_eq!(again, report);
    let (status, _) = c.err(Method::POST, &format!("/sessions/{sid}/pages/4"), Some(answer("tie"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let r: SubmitResult = c.ok(Method::POST, &format!("/sessions/{sid}/pages/11"), Some(answer("tie"))).await;
    assert_eq!(r.next_page, Some(12));
    let other: SessionView = c.ok(Method::GET, "/sessions/next?taker=t2", None).await;
    assert_ne!(other.session_id.as_str(), sid);
}

#[tokio::test]
async fn interrupted_writes_are_cut_back_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, log_path) = {
        let c = Client::open(dir.path());
        c.ok::<StudySummary>(Method::POST, "/studies", Some(realism_request("r"))).await;
        let s: SessionView = c.ok(Method::GET, "/sessions/next?taker=t1", None).await;
        let sid = s.session_id.as_str().to_string();
        c.ok::<SubmitResult>(Method::POST, &format!("/sessions/{sid}/pages/1"), Some(answer("tie"))).await;
        c.ok::<SubmitResult>(Method::POST, &format!("/sessions/{sid}/pages/2"), Some(answer("tie"))).await;
        (sid, dir.path().join("r").join("log.jsonl"))
    };
    // Simulate a crash after the vote line of page 2 but before its progress
    // line, plus half of a further line.
    let text = std::fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = lines[..lines.len() - 1].join("\n") + "\n{\"type\":\"vote\",\"sess";
    std::fs::write(&log_path, cut).unwrap();

    let c = Client::open(dir.path());
    let s: SessionView = c.ok(Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(s.next_page, Some(2));
    let st: StudySummary = c.ok(Method::GET, "/studies/r", None).await;
    assert_eq!(st.votes, 1);
    c.ok::<SubmitResult>(Method::POST, &format!("/sessions/{sid}/pages/2"), Some(answer("tie"))).await;
    let repaired = std::fs::read_to_string(&log_path).unwrap();
    StudyLog::parse(&repaired).unwrap();
    assert_eq!(StudyLog::parse(&repaired).unwrap().votes().len(), 2);
}

#[tokio::test]
async fn early_stopping_shrinks_the_pool_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let before;
    {
        let c = Client::open(dir.path());
        let s: StudySummary = c.ok(Method::POST, "/studies", Some(realism_request("r"))).await;
        before = s.active_pool_size;
        let t = PlantedTruth {
            realism_ratings: [("hifi".into(), 1300.0), ("baseline".into(), 700.0)].into(),
            ..PlantedTruth::default()
        };
        let bulk = serialize_log(&simulate_realism_votes(&t, 300).unwrap().entries).unwrap();
        c.raw(Method::POST, "/studies/r/votes/bulk", Some(bulk)).await;
        let v: AdaptiveView = c.ok(Method::POST, "/studies/r/adaptive?n_bootstrap=200", None).await;
        assert_eq!(v.state.stopped_pairs.len(), 1);
        assert!(v.active_pool_size < before);
    }
    let c = Client::open(dir.path());
    let v: AdaptiveView = c.ok(Method::GET, "/studies/r/adaptive", None).await;
    assert_eq!(v.state.stopped_pairs.len(), 1);
    assert!(v.active_pool_size < before);
    // Sessions scheduled after the stop avoid the stopped pair.
    let s: SessionView = c.ok(Method::GET, "/sessions/next?taker=late", None).await;
    let st: StudySummary = c.ok(Method::GET, "/studies/r", None).await;
    assert_eq!(st.active_pool_size, v.active_pool_size);
    assert_eq!(s.total_pages, 25);
}
