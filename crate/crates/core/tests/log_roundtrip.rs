mod common;

use common::{alignment_task, realism_task, vote};
use gesteval::model::{
    parse_log, parse_votes, serialize_log, serialize_votes, JuiceOption, LogEntry, ModelError, Response, StudyLog,
    VoteRecord,
};
use gesteval::simulate::{simulate_alignment_votes, simulate_realism_votes, simulate_sessions, PlantedTruth, TakerBehaviour};
use gesteval::study::{build_plan, PlanRequest, SessionConfig};
use proptest::prelude::*;

fn vote_strategy() -> impl Strategy<Value = VoteRecord> {
    let task = realism_task("a", "b");
    (
        prop::sample::select(Response::ALL.to_vec()),
        prop::collection::btree_set(prop::sample::select(vec![JuiceOption::Smoothness, JuiceOption::Other]), 1..3),
        "[ -~]{1,20}",
        1u32..26,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(move |(response, opts, text, page, ts, skipped)| {
            let mut v = vote(&task, "taker-1", page, response);
            v.timestamp_ms = ts;
            if skipped {
                v.response = None;
                v.juice_options.clear();
                v.skipped = true;
            } else if response != Response::Tie {
                v.juice_other_text = opts.contains(&JuiceOption::Other).then_some(text);
                v.juice_options = opts;
            }
            v
        })
}

proptest! {
    #[test]
    fn votes_survive_a_round_trip(votes in prop::collection::vec(vote_strategy(), 0..20)) {
        let text = serialize_votes(&votes).unwrap();
        prop_assert_eq!(parse_votes(&text).unwrap(), votes);
    }
}

#[test]
fn simulated_logs_round_trip_and_validate() {
    let truth = PlantedTruth {
        realism_ratings: [("a".into(), 1100.0), ("b".into(), 900.0), ("mocap".into(), 1200.0)].into(),
        alignment_p: [("a".into(), 0.7), ("b".into(), 0.5)].into(),
        mocap: Some("mocap".into()),
        ..Default::default()
    };
    for sim in [simulate_realism_votes(&truth, 30).unwrap(), simulate_alignment_votes(&truth, 4, 21).unwrap()] {
        let text = serialize_log(&sim.entries).unwrap();
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, sim.entries);
        let log = StudyLog::from_entries(parsed).unwrap();
        log.resolve().unwrap();
        sim.registry.validate().unwrap();
    }
}

#[test]
fn session_snapshots_round_trip() {
    let registry = simulate_realism_votes(
        &PlantedTruth { realism_ratings: (0..7).map(|i| (format!("c{i}").into(), 1000.0)).collect(), ..Default::default() },
        1,
    )
    .unwrap()
    .registry;
    let plan = build_plan(PlanRequest {
        study_id: "rt".into(),
        kind: gesteval::model::StudyKind::Realism,
        seed: 3,
        registry,
        conditions: vec![],
        segments: vec![],
        session: SessionConfig::default(),
        early_stopping: None,
        uri_prefix: "m".into(),
    })
    .unwrap();
    let mut sched = plan.scheduler().unwrap();
    let entries = simulate_sessions(&mut sched, 5, &PlantedTruth::default(), &TakerBehaviour::default(), 0).unwrap();
    let text = serialize_log(&entries).unwrap();
    let log = StudyLog::parse(&text).unwrap();
    assert_eq!(log.entries().len(), entries.len());
    assert_eq!(StudyLog::parse(&serialize_log(&log.entries()).unwrap()).unwrap().entries(), log.entries());
}

#[test]
fn bad_lines_report_where_they_are() {
    let task = alignment_task("g", true);
    let good = LogEntry::Task(task.clone()).to_line().unwrap();
    let text = format!("{good}\n\n{{\"type\":\"vote\",\"nope\":1}}\n");
    match parse_log(&text) {
        Err(ModelError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }

    let mut v = vote(&task, "t", 1, Response::LeftClear);
    v.juice_options.clear();
    let err = serialize_votes(&[v]).unwrap_err().to_string();
    assert!(err.contains("votes[0]") && err.contains("juice_options"), "{err}");

    let v = vote(&task, "t", 1, Response::Tie);
    let text = serialize_votes(&[v.clone(), v]).unwrap();
    assert!(matches!(StudyLog::parse(&text), Err(ModelError::DuplicateVote { .. })));
}

#[test]
fn votes_must_point_at_known_tasks() {
    let task = realism_task("a", "b");
    let mut log = StudyLog::new();
    log.add_vote(vote(&task, "t", 1, Response::Tie)).unwrap();
    assert!(matches!(log.resolve(), Err(ModelError::UnknownTask { .. })));
}

#[test]
fn progress_records_replay_to_the_live_state() {
    use gesteval::model::{SessionProgress, StudyKind};
    use gesteval::study::PageSubmission;

    let registry = simulate_realism_votes(
        &PlantedTruth { realism_ratings: (0..7).map(|i| (format!("c{i}").into(), 1000.0)).collect(), ..Default::default() },
        1,
    )
    .unwrap()
    .registry;
    let plan = build_plan(PlanRequest {
        study_id: "rp".into(),
        kind: StudyKind::Realism,
        seed: 1,
        registry,
        conditions: vec![],
        segments: vec![],
        session: SessionConfig::default(),
        early_stopping: None,
        uri_prefix: "m".into(),
    })
    .unwrap();
    let mut sched = plan.scheduler().unwrap();
    let initial = sched.schedule_session(&"t".into()).unwrap().clone();
    let id = initial.session_id.clone();
    let mut entries = vec![LogEntry::Session(initial)];
    for page in [1, 2, 3, 5, 7] {
        let sub = if page == 5 { PageSubmission::answer(Response::Tie, [], 9) } else { PageSubmission::skip(9) };
        let (outcome, state) = sched.record_response(&id, page, sub).unwrap();
        if let Some(v) = outcome.vote {
            entries.push(LogEntry::Vote(v));
        }
        entries.push(LogEntry::Progress(SessionProgress::of(state, page, 9).unwrap()));
    }
    let log = StudyLog::parse(&serialize_log(&entries).unwrap()).unwrap();
    assert_eq!(log.session(&id).unwrap(), sched.session(&id).unwrap());
    assert_eq!(log.votes().len(), 4);
    log.resolve().unwrap();
}
