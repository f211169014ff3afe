use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{study_rng, StudyError};
use crate::model::{
    AttentionCheck, CheckModality, ComparisonTask, JuiceOption, PageOutcome, Response, SessionId, SessionState,
    SessionStatus, Side, StudyId, StudyKind, TakerId, TaskId, VoteRecord,
};

const SESSION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub length: u32,
    pub attention_checks: u32,
    pub max_skips: u32,
    /// Progress window, as fractions of the session, holding the attention checks.
    pub window: (f64, f64),
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            length: 25,
            attention_checks: 4,
            max_skips: 3,
            window: (0.2, 0.8),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.length < 5 {
            return Err(StudyError::InvalidConfig(format!("session length must be at least 5, got {}", self.length)));
        }
        let (lo, hi) = self.window;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(StudyError::InvalidConfig(format!("invalid attention window ({lo}, {hi})")));
        }
        let positions = attention_positions(self);
        let distinct: BTreeSet<_> = positions.iter().collect();
        if distinct.len() != positions.len() || positions.iter().any(|&p| p == 0 || p > self.length) {
            return Err(StudyError::InvalidConfig(format!(
                "{} attention checks do not fit in {} pages",
                self.attention_checks, self.length
            )));
        }
        Ok(())
    }

    pub fn regular_pages(&self) -> u32 {
        self.length - self.attention_checks
    }
}

/// Evenly spaced 1-based pages across the progress window.
pub fn attention_positions(cfg: &SessionConfig) -> Vec<u32> {
    let k = cfg.attention_checks;
    let len = cfg.length as f64;
    let (lo, hi) = cfg.window;
    (0..k)
        .map(|i| {
            let frac = if k == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 };
            (len * frac).round() as u32
        })
        .collect()
}

/// What a test taker sent for one page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSubmission {
    #[serde(default)]
    pub response: Option<Response>,
    #[serde(default)]
    pub juice_options: BTreeSet<JuiceOption>,
    #[serde(default)]
    pub juice_other_text: Option<String>,
    #[serde(default)]
    pub skipped: bool,
    #[serde(default)]
    pub timestamp_ms: u64,
}

impl PageSubmission {
    pub fn skip(timestamp_ms: u64) -> Self {
        Self {
            skipped: true,
            timestamp_ms,
            ..Self::default()
        }
    }

    pub fn answer(response: Response, juice_options: impl IntoIterator<Item = JuiceOption>, timestamp_ms: u64) -> Self {
        Self {
            response: Some(response),
            juice_options: juice_options.into_iter().collect(),
            timestamp_ms,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub outcome: PageOutcome,
    pub status: SessionStatus,
    /// Present for answered and skipped regular pages.
    pub vote: Option<VoteRecord>,
}

/// Apply one page submission to a session. A rejected submission leaves the
/// session untouched.
pub fn record_response(
    state: &mut SessionState,
    page_index: u32,
    submission: PageSubmission,
    max_skips: u32,
) -> Result<RecordOutcome, StudyError> {
    if matches!(state.status, SessionStatus::Terminated | SessionStatus::Completed) {
        return Err(StudyError::SessionClosed {
            session: state.session_id.clone(),
            status: state.status,
        });
    }
    let task = state.page(page_index).cloned().ok_or_else(|| StudyError::PageOutOfRange {
        session: state.session_id.clone(),
        page: page_index,
        len: state.len() as u32,
    })?;
    let slot = page_index as usize - 1;
    if state.outcomes[slot].is_some() {
        return Err(StudyError::PageAlreadyAnswered {
            session: state.session_id.clone(),
            page: page_index,
        });
    }

    let vote = VoteRecord {
        session_id: state.session_id.clone(),
        taker_id: state.taker_id.clone(),
        page_index,
        task_id: task.id.clone(),
        response: submission.response,
        juice_options: submission.juice_options,
        juice_other_text: submission.juice_other_text,
        timestamp_ms: submission.timestamp_ms,
        skipped: submission.skipped,
    };

    let (outcome, vote) = match (&task.attention_check, vote.skipped) {
        (_, true) => {
            vote.validate().map_err(StudyError::InvalidSubmission)?;
            let keep = task.attention_check.is_none().then_some(vote);
            (PageOutcome::Skipped, keep)
        }
        (Some(check), false) => {
            let response = vote
                .response
                .ok_or_else(|| StudyError::InvalidSubmission(crate::model::ValidationError::new("response", "missing response")))?;
            if response == check.target {
                (PageOutcome::AttentionPassed, None)
            } else {
                (PageOutcome::AttentionFailed, None)
            }
        }
        (None, false) => {
            vote.validate().map_err(StudyError::InvalidSubmission)?;
            vote.validate_against(&task).map_err(StudyError::InvalidSubmission)?;
            (PageOutcome::Answered, Some(vote))
        }
    };

    state.outcomes[slot] = Some(outcome);
    match outcome {
        PageOutcome::Skipped => {
            state.skips_used += 1;
            if state.skips_used > max_skips {
                state.status = SessionStatus::Terminated;
                state.manual_review = true;
            }
        }
        PageOutcome::AttentionFailed => {
            state.attention_failures += 1;
            state.status = if state.attention_failures > 1 {
                SessionStatus::Rejected
            } else {
                SessionStatus::Excluded
            };
        }
        _ => {}
    }
    if state.status == SessionStatus::Active && state.outcomes.iter().all(Option::is_some) {
        state.status = SessionStatus::Completed;
    }
    Ok(RecordOutcome {
        outcome,
        status: state.status,
        vote,
    })
}

/// Issues sessions from a task pool and applies page submissions.
/// Single writer: callers serialize access.
#[derive(Debug, Clone)]
pub struct Scheduler {
    study_id: StudyId,
    kind: StudyKind,
    pool: Vec<ComparisonTask>,
    config: SessionConfig,
    seed: u64,
    takers: HashSet<TakerId>,
    sessions: BTreeMap<SessionId, SessionState>,
    issued: u64,
}

impl Scheduler {
    pub fn new(
        study_id: StudyId,
        kind: StudyKind,
        pool: Vec<ComparisonTask>,
        config: SessionConfig,
        seed: u64,
    ) -> Result<Self, StudyError> {
        config.validate()?;
        let mut s = Self {
            study_id,
            kind,
            pool: Vec::new(),
            config,
            seed,
            takers: HashSet::new(),
            sessions: BTreeMap::new(),
            issued: 0,
        };
        s.set_pool(pool)?;
        Ok(s)
    }

    /// Replace the task pool, e.g. after pairs stop early.
    pub fn set_pool(&mut self, pool: Vec<ComparisonTask>) -> Result<(), StudyError> {
        for (i, t) in pool.iter().enumerate() {
            if t.study_kind != self.kind {
                return Err(StudyError::Validation(crate::model::ValidationError::new(
                    format!("pool[{i}].study_kind"),
                    format!("expected a {} task", self.kind),
                )));
            }
            t.validate().map_err(|e| StudyError::Validation(e.within(format!("pool[{i}]"))))?;
        }
        self.pool = pool;
        Ok(())
    }

    pub fn pool(&self) -> &[ComparisonTask] {
        &self.pool
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn session(&self, id: &SessionId) -> Option<&SessionState> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionState> {
        self.sessions.values()
    }

    pub fn has_taker(&self, taker: &TakerId) -> bool {
        self.takers.contains(taker)
    }

    /// Re-register a session restored from storage.
    pub fn restore(&mut self, state: SessionState) {
        self.takers.insert(state.taker_id.clone());
        if self.sessions.insert(state.session_id.clone(), state).is_none() {
            self.issued += 1;
        }
    }

    pub fn schedule_session(&mut self, taker: &TakerId) -> Result<&SessionState, StudyError> {
        if self.takers.contains(taker) {
            return Err(StudyError::RepeatTaker(taker.clone()));
        }
        let needed = self.config.regular_pages() as usize;
        if self.pool.len() < needed {
            return Err(StudyError::PoolExhausted {
                needed,
                available: self.pool.len(),
            });
        }
        let session_id = SessionId::new(format!("{}.s{:05}", self.study_id, self.issued + 1));
        let mut rng = study_rng(self.seed, SESSION_STREAM_BASE + self.issued);

        let positions = attention_positions(&self.config);
        let mut modalities = vec![CheckModality::VisualText; positions.len()];
        if self.kind == StudyKind::Alignment {
            for m in modalities.iter_mut().take(positions.len() / 2) {
                *m = CheckModality::AudioVoice;
            }
            modalities.shuffle(&mut rng);
        }
        let picks = index::sample(&mut rng, self.pool.len(), needed).into_vec();

        let mut pages = Vec::with_capacity(self.config.length as usize);
        let mut regular = picks.into_iter();
        let mut checks = modalities.into_iter();
        for page in 1..=self.config.length {
            let id = TaskId::new(format!("{session_id}/p{page:02}"));
            let mut task = if positions.contains(&page) {
                let base = &self.pool[rng.random_range(0..self.pool.len())];
                let target = Response::ALL[rng.random_range(0..Response::ALL.len())];
                let modality = checks.next().expect("one modality per attention page");
                let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
                ComparisonTask {
                    attention_check: Some(AttentionCheck {
                        target,
                        modality,
                        side,
                        message: AttentionCheck::message_for(target),
                        audio_uri: (modality == CheckModality::AudioVoice)
                            .then(|| format!("attention/choose-{}.wav", target.likert())),
                    }),
                    ..base.clone()
                }
            } else {
                self.pool[regular.next().expect("one pool task per regular page")].clone()
            };
            if rng.random_bool(0.5) {
                task = task.swapped();
            }
            task.id = id;
            pages.push(task);
        }

        let state = SessionState {
            session_id: session_id.clone(),
            taker_id: taker.clone(),
            study_kind: self.kind,
            outcomes: vec![None; pages.len()],
            pages,
            attention_positions: positions,
            skips_used: 0,
            status: SessionStatus::Active,
            attention_failures: 0,
            manual_review: false,
        };
        self.issued += 1;
        self.takers.insert(taker.clone());
        Ok(self.sessions.entry(session_id).or_insert(state))
    }

    pub fn record_response(
        &mut self,
        session: &SessionId,
        page_index: u32,
        submission: PageSubmission,
    ) -> Result<(RecordOutcome, &SessionState), StudyError> {
        let state = self
            .sessions
            .get_mut(session)
            .ok_or_else(|| StudyError::UnknownSession(session.clone()))?;
        let outcome = record_response(state, page_index, submission, self.config.max_skips)?;
        Ok((outcome, state))
    }
}
