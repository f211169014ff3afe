use std::collections::{BTreeMap, BTreeSet};

use gesteval::model::{
    ArtifactFlag, Condition, ConditionId, ConditionKind, PageOutcome, Registry, Response, Segment, SegmentId,
    SessionStatus, Side, StudyKind, TakerId,
};
use gesteval::rating::{leaderboard, EloConfig};
use gesteval::simulate::{simulate_realism_votes, simulate_sessions, PlantedTruth, TakerBehaviour};
use gesteval::study::{
    attention_positions, build_plan, select_segments, update_adaptive_state, AdaptiveState, EarlyStopRule,
    PageSubmission, PlanRequest, SegmentPolicy, SessionConfig, StudyError, StudyPlan,
};
use proptest::prelude::*;

fn segment(speaker: &str, i: usize, duration: f64) -> Segment {
    Segment {
        id: SegmentId::new(format!("{speaker}-{i:02}")),
        speaker_id: speaker.into(),
        take_id: None,
        start_s: i as f64 * 20.0,
        end_s: i as f64 * 20.0 + duration,
        transcript: "Well, that is what I think.".into(),
        complete_sentences: Some(true),
        artifact_flags: BTreeSet::new(),
    }
}

fn registry(conditions: usize, speakers: &[(&str, usize)]) -> Registry {
    let mut conds: Vec<Condition> = (0..conditions)
        .map(|i| Condition {
            id: format!("sys{i}").into(),
            display_name: format!("System {i}"),
            kind: ConditionKind::Generative,
            seeds_available: 2,
        })
        .collect();
    conds[0].kind = ConditionKind::Mocap;
    conds[0].seeds_available = 1;
    Registry {
        conditions: conds,
        segments: speakers
            .iter()
            .flat_map(|&(sp, n)| (0..n).map(move |i| segment(sp, i, 9.0)))
            .collect(),
        stimuli: vec![],
    }
}

fn plan(kind: StudyKind, conditions: usize, speakers: &[(&str, usize)], seed: u64) -> StudyPlan {
    build_plan(PlanRequest {
        study_id: "st".into(),
        kind,
        seed,
        registry: registry(conditions, speakers),
        conditions: vec![],
        segments: vec![],
        session: SessionConfig::default(),
        early_stopping: None,
        uri_prefix: "media".into(),
    })
    .unwrap()
}

/// Per segment: appearances as matched audio vs as mismatched audio.
fn audio_balance(plan: &StudyPlan) -> BTreeMap<SegmentId, (usize, usize)> {
    let mut counts: BTreeMap<SegmentId, (usize, usize)> = BTreeMap::new();
    for t in &plan.pool {
        for s in [&t.left, &t.right] {
            let e = counts.entry(s.audio_segment_id.clone()).or_default();
            if s.is_matched() {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    counts
}

#[test]
fn alignment_plans_are_balanced_for_two_to_eight_segments_per_speaker() {
    for n in 2..=8 {
        for seed in 0..10 {
            let p = plan(StudyKind::Alignment, 3, &[("wayne", n), ("scott", n), ("lu", 2)], seed);
            let assignment = p.mismatch.as_ref().unwrap();
            for seg in &p.registry.segments {
                let target = assignment.audio_for(&seg.id).unwrap();
                assert_ne!(target, &seg.id);
                assert_eq!(p.registry.segment(target).unwrap().speaker_id, seg.speaker_id);
            }
            let sources: BTreeSet<_> = assignment.mapping.values().collect();
            assert_eq!(sources.len(), assignment.mapping.len(), "every segment is a source once");
            for (seg, (m, mm)) in audio_balance(&p) {
                assert_eq!(m, mm, "segment {seg} with n={n} seed={seed}");
            }
            assert_eq!(p.pool.len(), 3 * p.segments.len());
        }
    }
}

#[test]
fn alignment_pairs_share_motion_and_seed() {
    let p = plan(StudyKind::Alignment, 2, &[("a", 4)], 3);
    for t in &p.pool {
        assert_eq!(t.left.condition_id, t.right.condition_id);
        assert_eq!(t.left.segment_id, t.right.segment_id);
        assert_eq!(t.left.seed_index, t.right.seed_index);
        assert!(!t.left.muted && !t.right.muted);
        assert!(t.matched_side().is_some());
    }
}

#[test]
fn realism_pool_counts() {
    let p = plan(StudyKind::Realism, 2, &[("a", 4)], 1);
    assert_eq!(p.pool.len(), 4);
    let segs: BTreeSet<_> = p.pool.iter().map(|t| t.left.segment_id.clone()).collect();
    assert_eq!(segs.len(), 4);

    let p = plan(StudyKind::Realism, 7, &[("a", 1)], 1);
    assert_eq!(p.pool.len(), 21);
    assert!(p.pool.iter().all(|t| t.left.muted && t.right.muted && t.left.segment_id == t.right.segment_id));

    let stopped = AdaptiveState {
        stopped_pairs: BTreeSet::from([("sys0".into(), "sys6".into())]),
        ..Default::default()
    };
    let active = p.active_pool(&stopped).unwrap();
    assert_eq!(active.len(), 20);
    let stopped_pair: BTreeSet<ConditionId> = ["sys0".into(), "sys6".into()].into();
    assert!(active.iter().all(|t| {
        let pair: BTreeSet<ConditionId> = [t.left.condition_id.clone(), t.right.condition_id.clone()].into();
        pair != stopped_pair
    }));
}

#[test]
fn too_few_conditions_and_lonely_speakers_are_errors() {
    let req = |kind, conds, speakers: &[(&str, usize)]| PlanRequest {
        study_id: "x".into(),
        kind,
        seed: 0,
        registry: registry(conds, speakers),
        conditions: vec![],
        segments: vec![],
        session: SessionConfig::default(),
        early_stopping: None,
        uri_prefix: "m".into(),
    };
    assert!(matches!(build_plan(req(StudyKind::Realism, 1, &[("a", 3)])), Err(StudyError::TooFewConditions(_))));
    assert!(matches!(
        build_plan(req(StudyKind::Alignment, 2, &[("a", 3), ("b", 1)])),
        Err(StudyError::NoDerangement { .. })
    ));
}

#[test]
fn segment_screening_and_quota() {
    let mut candidates: Vec<Segment> = (0..12).map(|i| segment("w", i, 9.0)).collect();
    candidates.push(segment("w", 40, 6.9));
    let mut flicker = segment("w", 41, 9.0);
    flicker.artifact_flags.insert(ArtifactFlag::Flicking);
    candidates.push(flicker);
    let policy = SegmentPolicy::default();
    let a = select_segments(&candidates, &policy, 5).unwrap();
    let b = select_segments(&candidates, &policy, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    assert!(a.iter().all(|s| s.duration_s() >= 7.0 && s.artifact_flags.is_empty()));
}

#[test]
fn attention_pages_sit_evenly_in_the_window() {
    assert_eq!(attention_positions(&SessionConfig::default()), vec![5, 10, 15, 20]);
}

fn checks_by_modality(plan: &StudyPlan, n: usize) -> Vec<(usize, usize)> {
    let mut s = plan.scheduler().unwrap();
    (0..n)
        .map(|i| {
            let st = s.schedule_session(&TakerId::new(format!("t{i}"))).unwrap();
            let checks: Vec<_> = st.pages.iter().filter_map(|p| p.attention_check.as_ref()).collect();
            let audio = checks
                .iter()
                .filter(|c| c.modality == gesteval::model::CheckModality::AudioVoice)
                .count();
            (audio, checks.len() - audio)
        })
        .collect()
}

#[test]
fn alignment_sessions_mix_audio_and_visual_checks() {
    let p = plan(StudyKind::Alignment, 3, &[("a", 4), ("b", 4)], 0);
    assert!(checks_by_modality(&p, 20).iter().all(|&c| c == (2, 2)));
    let p = plan(StudyKind::Realism, 7, &[("a", 2)], 0);
    assert!(checks_by_modality(&p, 20).iter().all(|&c| c == (0, 4)));
}

#[test]
fn repeat_takers_are_refused_and_schedules_are_deterministic() {
    let p = plan(StudyKind::Realism, 7, &[("a", 2)], 11);
    let mut s1 = p.scheduler().unwrap();
    let mut s2 = p.scheduler().unwrap();
    for i in 0..5 {
        let t = TakerId::new(format!("t{i}"));
        assert_eq!(s1.schedule_session(&t).unwrap(), s2.schedule_session(&t).unwrap());
    }
    assert!(matches!(s1.schedule_session(&"t0".into()), Err(StudyError::RepeatTaker(_))));
}

#[test]
fn skips_failures_and_duplicates() {
    let p = plan(StudyKind::Realism, 7, &[("a", 2)], 2);
    let mut s = p.scheduler().unwrap();
    let id = s.schedule_session(&"skipper".into()).unwrap().session_id.clone();
    for page in 1..=3 {
        let (o, _) = s.record_response(&id, page, PageSubmission::skip(0)).unwrap();
        assert_eq!(o.status, SessionStatus::Active);
        assert!(o.vote.unwrap().skipped);
    }
    let (o, st) = s.record_response(&id, 4, PageSubmission::skip(0)).unwrap();
    assert_eq!(o.status, SessionStatus::Terminated);
    assert!(st.manual_review);
    assert!(matches!(
        s.record_response(&id, 6, PageSubmission::answer(Response::Tie, [], 0)),
        Err(StudyError::SessionClosed { .. })
    ));

    let id = s.schedule_session(&"sloppy".into()).unwrap().session_id.clone();
    let state = s.session(&id).unwrap().clone();
    let wrong = |page: u32| {
        let target = state.page(page).unwrap().attention_check.as_ref().unwrap().target;
        PageSubmission::answer(if target == Response::Tie { Response::LeftClear } else { Response::Tie }, [], 0)
    };
    s.record_response(&id, 1, PageSubmission::answer(Response::Tie, [], 0)).unwrap();
    assert!(matches!(
        s.record_response(&id, 1, PageSubmission::answer(Response::Tie, [], 0)),
        Err(StudyError::PageAlreadyAnswered { .. })
    ));
    let (o, _) = s.record_response(&id, 5, wrong(5)).unwrap();
    assert_eq!((o.outcome, o.status, o.vote.is_none()), (PageOutcome::AttentionFailed, SessionStatus::Excluded, true));
    // Excluded sessions keep being served.
    s.record_response(&id, 6, PageSubmission::answer(Response::Tie, [], 0)).unwrap();
    let (o, _) = s.record_response(&id, 10, wrong(10)).unwrap();
    assert_eq!(o.status, SessionStatus::Rejected);
}

#[test]
fn invalid_submission_leaves_the_session_untouched() {
    let p = plan(StudyKind::Realism, 7, &[("a", 2)], 2);
    let mut s = p.scheduler().unwrap();
    let id = s.schedule_session(&"t".into()).unwrap().session_id.clone();
    let before = s.session(&id).unwrap().clone();
    // A non-tie answer must carry at least one reason.
    assert!(matches!(
        s.record_response(&id, 1, PageSubmission::answer(Response::LeftClear, [], 0)),
        Err(StudyError::InvalidSubmission(_))
    ));
    assert_eq!(s.session(&id).unwrap(), &before);
}

#[test]
fn thousand_simulated_sessions_follow_the_rules() {
    let p = plan(StudyKind::Realism, 7, &[("a", 4)], 8);
    let mut s = p.scheduler().unwrap();
    let behaviour = TakerBehaviour { skip_prob: 0.08, attention_fail_prob: 0.1, inattentive_fraction: 0.05 };
    let entries = simulate_sessions(&mut s, 1000, &PlantedTruth::default(), &behaviour, 1).unwrap();
    assert!(!entries.is_empty());
    let mut seen = std::collections::HashSet::new();
    for st in s.sessions() {
        assert_eq!(st.len(), 25);
        assert_eq!(st.attention_positions, vec![5, 10, 15, 20]);
        for (i, page) in st.pages.iter().enumerate() {
            assert_eq!(page.attention_check.is_some(), st.attention_positions.contains(&(i as u32 + 1)));
        }
        let skips = st.outcomes.iter().filter(|o| **o == Some(PageOutcome::Skipped)).count();
        let fails = st.outcomes.iter().filter(|o| **o == Some(PageOutcome::AttentionFailed)).count();
        assert_eq!(skips as u32, st.skips_used);
        assert_eq!(fails as u32, st.attention_failures);
        let expected = if skips >= 4 {
            SessionStatus::Terminated
        } else if fails >= 2 {
            SessionStatus::Rejected
        } else if fails == 1 {
            SessionStatus::Excluded
        } else {
            SessionStatus::Completed
        };
        assert_eq!(st.status, expected, "{}", st.session_id);
        if st.status == SessionStatus::Terminated {
            assert_eq!(skips, 4);
            let last = st.outcomes.iter().rposition(Option::is_some).unwrap();
            assert_eq!(st.outcomes[last], Some(PageOutcome::Skipped));
            assert!(st.manual_review);
        }
        if st.status == SessionStatus::Completed {
            // 21 regular pages answered or skipped, 4 checks passed or skipped.
            let (mut regular, mut checks) = (0, 0);
            for (i, o) in st.outcomes.iter().enumerate() {
                match (st.attention_positions.contains(&(i as u32 + 1)), o.unwrap()) {
                    (false, PageOutcome::Answered | PageOutcome::Skipped) => regular += 1,
                    (true, PageOutcome::AttentionPassed | PageOutcome::Skipped) => checks += 1,
                    other => panic!("unexpected outcome {other:?}"),
                }
            }
            assert_eq!((regular, checks), (21, 4));
        }
        seen.insert(st.status);
    }
    assert_eq!(s.sessions().count(), 1000);
    for status in [SessionStatus::Completed, SessionStatus::Terminated, SessionStatus::Excluded, SessionStatus::Rejected] {
        assert!(seen.contains(&status), "{status:?} never occurred");
    }
}

#[test]
fn close_pairs_keep_running_and_clear_pairs_stop() {
    let rule = EarlyStopRule::default();
    let cfg = |seed| EloConfig { n_bootstrap: 200, rng_seed: seed, ..EloConfig::default() };
    let run = |a: f64, b: f64, votes: usize, seed: u64| {
        let truth = PlantedTruth {
            realism_ratings: [("a".into(), a), ("b".into(), b)].into(),
            rng_seed: seed,
            ..Default::default()
        };
        let log = simulate_realism_votes(&truth, votes).unwrap().to_log().unwrap();
        let report = leaderboard(&log.analysis_votes(StudyKind::Realism).unwrap(), &cfg(seed)).unwrap();
        update_adaptive_state(&AdaptiveState::default(), &report, &rule).is_stopped(&"a".into(), &"b".into())
    };
    let stopped = (0..20).filter(|&s| run(1133.0, 701.0, 300, s)).count();
    assert!(stopped >= 19, "{stopped}/20");
    let mut ever_stopped = 0;
    for seed in 0..20 {
        if [500, 1000, 2500, 5000].iter().any(|&n| run(1102.0, 1088.0, n, seed)) {
            ever_stopped += 1;
        }
    }
    assert!(ever_stopped <= 1, "{ever_stopped}/20");
    assert!(!AdaptiveState::default().is_stopped(&"a".into(), &"b".into()));
}

#[test]
fn payload_side_swap_keeps_the_check_side_meaningful() {
    let p = plan(StudyKind::Alignment, 3, &[("a", 4), ("b", 4)], 4);
    let mut s = p.scheduler().unwrap();
    let st = s.schedule_session(&"t".into()).unwrap();
    for page in &st.pages {
        if let Some(c) = &page.attention_check {
            assert!(matches!(c.side, Side::Left | Side::Right));
            assert!(c.message.contains(c.target.label()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn derangements_balance_any_speaker_layout(sizes in prop::collection::vec(2usize..9, 1..4), seed in any::<u64>()) {
        let speakers: Vec<(String, usize)> = sizes.iter().enumerate().map(|(i, &n)| (format!("sp{i}"), n)).collect();
        let refs: Vec<(&str, usize)> = speakers.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        let p = plan(StudyKind::Alignment, 2, &refs, seed);
        for (m, mm) in audio_balance(&p).values() {
            prop_assert_eq!(m, mm);
        }
    }
}
