//! Synthetic voters with planted ground truth.
//!
//! Realism votes follow the Elo win curve and alignment votes follow a
//! planted matched-preference probability. The per-vote win probability is
//! calibrated so that, after the clear = 2 / slight = 1 / tie = ½ + ½
//! weighting used by the analyses, the expected weighted win share equals the
//! planted value exactly. The planted ratings and scores are therefore the
//! quantities the pipeline estimates, not merely monotone in them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ComparisonTask, Condition, ConditionId, ConditionKind, JuiceOption, LogEntry, ModelError, Registry, Response,
    Segment, SegmentId, SessionId, SessionStatus, Side, Strength, StudyKind, StudyLog, TakerId, TaskId, VoteRecord,
};
use crate::rating::{predict_win_prob, EloConfig};
use crate::stats::replicate_rng;
use crate::study::{self, PageSubmission, Scheduler, StudyError};

const BASE_TIMESTAMP_MS: u64 = 1_700_000_000_000;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid planted truth: {0}")]
    InvalidTruth(String),
    #[error("need at least 2 conditions, got {0}")]
    TooFewConditions(usize),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedTruth {
    pub realism_ratings: BTreeMap<ConditionId, f64>,
    pub alignment_p: BTreeMap<ConditionId, f64>,
    pub tie_rate: f64,
    pub clear_given_win: f64,
    pub rng_seed: u64,
    /// Marks one condition as the mocap reference in the generated registry.
    pub mocap: Option<ConditionId>,
}

impl Default for PlantedTruth {
    fn default() -> Self {
        Self {
            realism_ratings: BTreeMap::new(),
            alignment_p: BTreeMap::new(),
            tie_rate: 0.1,
            clear_given_win: 0.5,
            rng_seed: 0,
            mocap: None,
        }
    }
}

impl PlantedTruth {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidTruth(m));
        for (name, v) in [("tie_rate", self.tie_rate), ("clear_given_win", self.clear_given_win)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.tie_rate == 1.0 {
            return bad("tie_rate of 1 leaves no preference mass".into());
        }
        for (c, p) in &self.alignment_p {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("alignment_p[{c}] must lie in [0, 1], got {p}"));
            }
        }
        for (c, r) in &self.realism_ratings {
            if !r.is_finite() {
                return bad(format!("realism_ratings[{c}] is not finite"));
            }
        }
        Ok(())
    }
}

/// Per-vote behaviour that makes the expected weighted win share equal `share`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteModel {
    pub tie_rate: f64,
    /// Probability the first side wins a non-tie vote.
    pub win_prob: f64,
    pub clear_given_win: f64,
}

impl VoteModel {
    pub fn calibrate(share: f64, tie_rate: f64, clear_given_win: f64) -> Self {
        let k = 1.0 + clear_given_win;
        let total = (1.0 - tie_rate) * k + tie_rate;
        let q = (share * total - 0.5 * tie_rate) / ((1.0 - tie_rate) * k);
        if (0.0..=1.0).contains(&q) {
            return Self {
                tie_rate,
                win_prob: q,
                clear_given_win,
            };
        }
        // Too lopsided for this tie rate: always pick the favourite and thin out ties.
        let (fav, win_prob) = if q > 1.0 { (share, 1.0) } else { (1.0 - share, 0.0) };
        let t = k * (1.0 - fav) / (k * (1.0 - fav) + fav - 0.5);
        Self {
            tie_rate: t.clamp(0.0, tie_rate),
            win_prob,
            clear_given_win,
        }
    }

    /// Expected weighted share of the first side.
    pub fn expected_share(&self) -> f64 {
        let k = 1.0 + self.clear_given_win;
        ((1.0 - self.tie_rate) * k * self.win_prob + 0.5 * self.tie_rate) / ((1.0 - self.tie_rate) * k + self.tie_rate)
    }

    /// `None` for a tie, otherwise whether the first side won and how strongly.
    pub fn draw(&self, rng: &mut impl Rng) -> Option<(bool, Strength)> {
        if rng.random::<f64>() < self.tie_rate {
            return None;
        }
        let first = rng.random::<f64>() < self.win_prob;
        let strength = if rng.random::<f64>() < self.clear_given_win {
            Strength::Clear
        } else {
            Strength::Slight
        };
        Some((first, strength))
    }
}

fn juice_for(kind: StudyKind, rng: &mut impl Rng) -> (BTreeSet<JuiceOption>, Option<String>) {
    let options = kind.juice_options();
    let n = rng.random_range(1..=3);
    let picked: BTreeSet<JuiceOption> = options.choose_multiple(rng, n).copied().collect();
    let text = picked
        .contains(&JuiceOption::Other)
        .then(|| format!("note {}", rng.random_range(0..1000)));
    (picked, text)
}

/// Planted probability that the left side of `task` is preferred.
fn left_share(task: &ComparisonTask, truth: &PlantedTruth) -> f64 {
    match task.study_kind {
        StudyKind::Realism => {
            let r = |s: Side| truth.realism_ratings.get(&task.stimulus(s).condition_id).copied();
            match (r(Side::Left), r(Side::Right)) {
                (Some(a), Some(b)) => predict_win_prob(a, b, &EloConfig::default()),
                _ => 0.5,
            }
        }
        StudyKind::Alignment => {
            let p = truth.alignment_p.get(&task.left.condition_id).copied().unwrap_or(0.5);
            match task.matched_side() {
                Some(Side::Left) => p,
                Some(Side::Right) => 1.0 - p,
                None => 0.5,
            }
        }
    }
}

/// A planted-truth answer for a regular page.
pub fn draw_submission(task: &ComparisonTask, truth: &PlantedTruth, rng: &mut impl Rng, timestamp_ms: u64) -> PageSubmission {
    let model = VoteModel::calibrate(left_share(task, truth), truth.tie_rate, truth.clear_given_win);
    match model.draw(rng) {
        None => PageSubmission::answer(Response::Tie, [], timestamp_ms),
        Some((left, strength)) => {
            let side = if left { Side::Left } else { Side::Right };
            let (options, text) = juice_for(task.study_kind, rng);
            PageSubmission {
                juice_other_text: text,
                ..PageSubmission::answer(Response::from_preference(side, strength), options, timestamp_ms)
            }
        }
    }
}

/// A registry plus log entries (tasks, then votes).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub registry: Registry,
    pub entries: Vec<LogEntry>,
}

impl Simulation {
    pub fn to_log(&self) -> Result<StudyLog, ModelError> {
        StudyLog::from_entries(self.entries.iter().cloned())
    }

    pub fn votes(&self) -> impl Iterator<Item = &VoteRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Vote(v) => Some(v),
            _ => None,
        })
    }
}

fn synthetic_segments(speakers: usize, per_speaker: usize) -> Vec<Segment> {
    (0..speakers)
        .flat_map(|sp| {
            (0..per_speaker).map(move |i| Segment {
                id: SegmentId::new(format!("spk{sp}-seg{i}")),
                speaker_id: format!("spk{sp}"),
                take_id: None,
                start_s: i as f64 * 15.0,
                end_s: i as f64 * 15.0 + 9.0,
                transcript: "A synthetic sentence.".into(),
                complete_sentences: Some(true),
                artifact_flags: BTreeSet::new(),
            })
        })
        .collect()
}

fn synthetic_conditions(ids: impl Iterator<Item = ConditionId>, mocap: Option<&ConditionId>) -> Vec<Condition> {
    ids.map(|id| Condition {
        display_name: id.to_string(),
        kind: if Some(&id) == mocap {
            ConditionKind::Mocap
        } else {
            ConditionKind::Generative
        },
        id,
        seeds_available: 1,
    })
    .collect()
}

/// Both presentation orders of every pool task.
fn both_orders(pool: Vec<ComparisonTask>) -> Vec<ComparisonTask> {
    pool.into_iter()
        .flat_map(|t| {
            let mut a = t.clone();
            a.id = TaskId::new(format!("{}/lr", t.id));
            let mut b = t.swapped();
            b.id = TaskId::new(format!("{}/rl", t.id));
            [a, b]
        })
        .collect()
}

/// Emit votes for `jobs` (one task index each), grouped into sessions of
/// `pages` consecutive votes per taker.
fn emit_votes(
    tasks: &[ComparisonTask],
    jobs: &[usize],
    pages: usize,
    taker_prefix: &str,
    truth: &PlantedTruth,
    rng: &mut ChaCha8Rng,
) -> Vec<LogEntry> {
    jobs.iter()
        .enumerate()
        .map(|(i, &t)| {
            let task = &tasks[t];
            let session = i / pages;
            let ts = BASE_TIMESTAMP_MS + i as u64 * 1000;
            let sub = draw_submission(task, truth, rng, ts);
            LogEntry::Vote(VoteRecord {
                session_id: SessionId::new(format!("{taker_prefix}{session:05}.session")),
                taker_id: TakerId::new(format!("{taker_prefix}{session:05}")),
                page_index: (i % pages) as u32 + 1,
                task_id: task.id.clone(),
                response: sub.response,
                juice_options: sub.juice_options,
                juice_other_text: sub.juice_other_text,
                timestamp_ms: ts,
                skipped: false,
            })
        })
        .collect()
}

const REALISM_SEGMENTS: usize = 4;
const PAGES_PER_SIMULATED_SESSION: usize = 21;

/// `n_votes_per_pair` realism votes for every pair of planted conditions.
pub fn simulate_realism_votes(truth: &PlantedTruth, n_votes_per_pair: usize) -> Result<Simulation, SimulationError> {
    truth.validate()?;
    let ids: Vec<ConditionId> = truth.realism_ratings.keys().cloned().collect();
    if ids.len() < 2 {
        return Err(SimulationError::TooFewConditions(ids.len()));
    }
    let segments = synthetic_segments(1, REALISM_SEGMENTS);
    let conditions = synthetic_conditions(ids.iter().cloned(), truth.mocap.as_ref());
    let mut registry = Registry {
        stimuli: study::synthesize_stimuli(&conditions, &segments, StudyKind::Realism, None, "sim")?,
        conditions,
        segments,
    };
    registry.validate().map_err(ModelError::from)?;
    let seg_ids: Vec<SegmentId> = registry.segments.iter().map(|s| s.id.clone()).collect();
    let pool = study::generate_realism_tasks(&registry, &ids, &seg_ids, &Default::default(), truth.rng_seed)?;
    let tasks = both_orders(pool);

    // Tasks come pair-major, 2 × segments per pair.
    let per_pair = 2 * REALISM_SEGMENTS;
    let n_pairs = tasks.len() / per_pair;
    let mut rng = replicate_rng(truth.rng_seed, 0x5157);
    let mut jobs: Vec<usize> = (0..n_pairs)
        .flat_map(|p| std::iter::repeat_n(p, n_votes_per_pair))
        .map(|p| p * per_pair)
        .collect();
    for j in jobs.iter_mut() {
        *j += rng.random_range(0..per_pair);
    }
    jobs.shuffle(&mut rng);

    let mut entries: Vec<LogEntry> = tasks.iter().cloned().map(LogEntry::Task).collect();
    entries.extend(emit_votes(&tasks, &jobs, PAGES_PER_SIMULATED_SESSION, "rt", truth, &mut rng));
    registry.stimuli.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Simulation { registry, entries })
}

const ALIGNMENT_SPEAKERS: usize = 2;
const ALIGNMENT_SEGMENTS_PER_SPEAKER: usize = 4;

/// For every planted condition, `n_takers` takers each answer
/// `pages_per_taker` alignment pages on that condition.
pub fn simulate_alignment_votes(
    truth: &PlantedTruth,
    n_takers: usize,
    pages_per_taker: usize,
) -> Result<Simulation, SimulationError> {
    truth.validate()?;
    let ids: Vec<ConditionId> = truth.alignment_p.keys().cloned().collect();
    if ids.is_empty() {
        return Err(SimulationError::TooFewConditions(0));
    }
    if pages_per_taker == 0 || pages_per_taker > 25 {
        return Err(SimulationError::InvalidTruth(format!(
            "pages_per_taker must lie in 1..=25, got {pages_per_taker}"
        )));
    }
    let segments = synthetic_segments(ALIGNMENT_SPEAKERS, ALIGNMENT_SEGMENTS_PER_SPEAKER);
    let assignment = study::build_mismatch_assignment(&segments, truth.rng_seed)?;
    let conditions = synthetic_conditions(ids.iter().cloned(), truth.mocap.as_ref());
    let registry = Registry {
        stimuli: study::synthesize_stimuli(&conditions, &segments, StudyKind::Alignment, Some(&assignment), "sim")?,
        conditions,
        segments,
    };
    registry.validate().map_err(ModelError::from)?;
    let seg_ids: Vec<SegmentId> = registry.segments.iter().map(|s| s.id.clone()).collect();

    let mut rng = replicate_rng(truth.rng_seed, 0xA11);
    let mut entries = Vec::new();
    let mut votes = Vec::new();
    for (ci, c) in ids.iter().enumerate() {
        let tasks = both_orders(study::generate_alignment_tasks(
            &registry,
            c,
            &seg_ids,
            &assignment,
            truth.rng_seed,
        )?);
        let jobs: Vec<usize> = (0..n_takers * pages_per_taker)
            .map(|_| rng.random_range(0..tasks.len()))
            .collect();
        votes.extend(emit_votes(
            &tasks,
            &jobs,
            pages_per_taker,
            &format!("at{ci:02}-"),
            truth,
            &mut rng,
        ));
        entries.extend(tasks.into_iter().map(LogEntry::Task));
    }
    entries.extend(votes);
    Ok(Simulation { registry, entries })
}

/// How simulated test takers behave on scheduled sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TakerBehaviour {
    pub skip_prob: f64,
    /// Chance of answering an attention check wrongly.
    pub attention_fail_prob: f64,
    /// Share of takers who answer uniformly at random throughout.
    pub inattentive_fraction: f64,
}

impl Default for TakerBehaviour {
    fn default() -> Self {
        Self {
            skip_prob: 0.02,
            attention_fail_prob: 0.02,
            inattentive_fraction: 0.0,
        }
    }
}

/// Run `n_sessions` takers through a scheduler. Returns page tasks, votes and
/// final session snapshots as log entries.
pub fn simulate_sessions(
    scheduler: &mut Scheduler,
    n_sessions: usize,
    truth: &PlantedTruth,
    behaviour: &TakerBehaviour,
    seed: u64,
) -> Result<Vec<LogEntry>, SimulationError> {
    let mut tasks = Vec::new();
    let mut votes = Vec::new();
    let mut snapshots = Vec::new();
    let mut clock = BASE_TIMESTAMP_MS;
    for i in 0..n_sessions {
        let mut rng = replicate_rng(seed, 0x5E55_0000 + i as u64);
        let taker = TakerId::new(format!("taker{i:05}"));
        let state = scheduler.schedule_session(&taker)?.clone();
        tasks.extend(state.pages.iter().cloned().map(LogEntry::Task));
        let inattentive = rng.random::<f64>() < behaviour.inattentive_fraction;
        for page in 1..=state.len() as u32 {
            let current = scheduler.session(&state.session_id).expect("session exists");
            if matches!(current.status, SessionStatus::Terminated | SessionStatus::Completed) {
                break;
            }
            let task = current.page(page).expect("page exists").clone();
            clock += 1000;
            let sub = if rng.random::<f64>() < behaviour.skip_prob {
                PageSubmission::skip(clock)
            } else if inattentive {
                let response = *Response::ALL.choose(&mut rng).expect("non-empty");
                let (options, text) = if response == Response::Tie {
                    (BTreeSet::new(), None)
                } else {
                    juice_for(task.study_kind, &mut rng)
                };
                PageSubmission {
                    juice_other_text: text,
                    ..PageSubmission::answer(response, options, clock)
                }
            } else if let Some(check) = &task.attention_check {
                let response = if rng.random::<f64>() < behaviour.attention_fail_prob {
                    let others: Vec<Response> = Response::ALL.into_iter().filter(|&r| r != check.target).collect();
                    *others.choose(&mut rng).expect("four alternatives")
                } else {
                    check.target
                };
                PageSubmission::answer(response, [], clock)
            } else {
                draw_submission(&task, truth, &mut rng, clock)
            };
            let (outcome, _) = scheduler.record_response(&state.session_id, page, sub)?;
            if let Some(v) = outcome.vote {
                votes.push(LogEntry::Vote(v));
            }
        }
        snapshots.push(LogEntry::Session(
            scheduler.session(&state.session_id).expect("session exists").clone(),
        ));
    }
    Ok(tasks.into_iter().chain(snapshots).chain(votes).collect())
}
