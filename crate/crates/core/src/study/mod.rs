//! Segment selection, stimulus pairing, task pools and session scheduling.

mod adaptive;
mod mismatch;
mod segments;
mod session;
mod tasks;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ComparisonTask, ConditionId, Registry, SegmentId, SessionId, SessionStatus, StudyId, StudyKind, TakerId,
    ValidationError,
};

pub use adaptive::{update_adaptive_state, AdaptiveState, EarlyStopRule, Pair};
pub use mismatch::{build_mismatch_assignment, MismatchAssignment};
pub use segments::{screen_segment, select_segments, Rejection, SegmentPolicy, Shortfall};
pub use session::{attention_positions, record_response, PageSubmission, RecordOutcome, Scheduler, SessionConfig};
pub use tasks::{generate_alignment_tasks, generate_realism_tasks, synthesize_stimuli};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("segment quota not met: {}", format_shortfalls(.shortfalls))]
    Shortfall {
        shortfalls: Vec<Shortfall>,
        partial: Vec<crate::model::Segment>,
    },
    #[error("speaker {speaker} has a single segment; no mismatch assignment exists")]
    NoDerangement { speaker: String },
    #[error("invalid mismatch assignment: {0}")]
    InvalidAssignment(String),
    #[error("need at least 2 active conditions, got {0}")]
    TooFewConditions(usize),
    #[error("no stimulus for condition {condition} on segment {segment} with audio from {audio}")]
    MissingStimulus {
        condition: ConditionId,
        segment: SegmentId,
        audio: SegmentId,
    },
    #[error("taker {0} already took part in this study")]
    RepeatTaker(TakerId),
    #[error("task pool has {available} tasks but a session needs {needed}")]
    PoolExhausted { needed: usize, available: usize },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {session} has {len} pages; page {page} does not exist")]
    PageOutOfRange { session: SessionId, page: u32, len: u32 },
    #[error("page {page} of session {session} was already answered")]
    PageAlreadyAnswered { session: SessionId, page: u32 },
    #[error("session {session} is {status:?}")]
    SessionClosed { session: SessionId, status: SessionStatus },
    #[error("invalid submission: {0}")]
    InvalidSubmission(ValidationError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn format_shortfalls(s: &[Shortfall]) -> String {
    s.iter()
        .map(|x| format!("{} has {} of {}", x.speaker, x.selected, x.quota))
        .collect::<Vec<_>>()
        .join(", ")
}

pub(crate) fn study_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Everything needed to run a study: registry, task pool and session rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub study_id: StudyId,
    pub kind: StudyKind,
    pub seed: u64,
    pub registry: Registry,
    pub conditions: Vec<ConditionId>,
    pub segments: Vec<SegmentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<MismatchAssignment>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<EarlyStopRule>,
    pub pool: Vec<ComparisonTask>,
}

impl StudyPlan {
    pub fn validate(&self) -> Result<(), StudyError> {
        self.registry.validate().map_err(|e| e.within("registry"))?;
        self.session.validate()?;
        for c in &self.conditions {
            if self.registry.condition(c).is_none() {
                return Err(ValidationError::new("conditions", format!("unknown condition {c}")).into());
            }
        }
        for s in &self.segments {
            if self.registry.segment(s).is_none() {
                return Err(ValidationError::new("segments", format!("unknown segment {s}")).into());
            }
        }
        if self.kind == StudyKind::Alignment {
            let assignment = self
                .mismatch
                .as_ref()
                .ok_or_else(|| ValidationError::new("mismatch", "alignment studies need a mismatch assignment"))?;
            let segs: Vec<_> = self
                .segments
                .iter()
                .filter_map(|s| self.registry.segment(s).cloned())
                .collect();
            assignment.validate(&segs)?;
        }
        for (i, t) in self.pool.iter().enumerate() {
            if t.study_kind != self.kind {
                return Err(ValidationError::new(format!("pool[{i}].study_kind"), "does not match the study").into());
            }
            t.validate().map_err(|e| e.within(format!("pool[{i}]")))?;
        }
        Ok(())
    }

    /// Rebuild the realism pool without the stopped pairs.
    pub fn active_pool(&self, adaptive: &AdaptiveState) -> Result<Vec<ComparisonTask>, StudyError> {
        match self.kind {
            StudyKind::Realism => {
                generate_realism_tasks(&self.registry, &self.conditions, &self.segments, adaptive, self.seed)
            }
            StudyKind::Alignment => Ok(self.pool.clone()),
        }
    }

    pub fn scheduler(&self) -> Result<Scheduler, StudyError> {
        Scheduler::new(
            self.study_id.clone(),
            self.kind,
            self.pool.clone(),
            self.session.clone(),
            self.seed,
        )
    }
}

/// Inputs for [`build_plan`]. Empty condition or segment lists mean "all in
/// the registry"; a registry without stimuli gets synthesized ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub study_id: StudyId,
    pub kind: StudyKind,
    #[serde(default)]
    pub seed: u64,
    pub registry: Registry,
    #[serde(default)]
    pub conditions: Vec<ConditionId>,
    #[serde(default)]
    pub segments: Vec<SegmentId>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopRule>,
    #[serde(default = "default_uri_prefix")]
    pub uri_prefix: String,
}

fn default_uri_prefix() -> String {
    "media".into()
}

pub fn build_plan(req: PlanRequest) -> Result<StudyPlan, StudyError> {
    let PlanRequest {
        study_id,
        kind,
        seed,
        mut registry,
        conditions,
        segments,
        session,
        early_stopping,
        uri_prefix,
    } = req;
    session.validate()?;
    let conditions = if conditions.is_empty() {
        registry.conditions.iter().map(|c| c.id.clone()).collect()
    } else {
        conditions
    };
    let segments: Vec<SegmentId> = if segments.is_empty() {
        registry.segments.iter().map(|s| s.id.clone()).collect()
    } else {
        segments
    };
    let segment_docs = segments
        .iter()
        .map(|id| {
            registry
                .segment(id)
                .cloned()
                .ok_or_else(|| ValidationError::new("segments", format!("unknown segment {id}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let condition_docs = conditions
        .iter()
        .map(|id| {
            registry
                .condition(id)
                .cloned()
                .ok_or_else(|| ValidationError::new("conditions", format!("unknown condition {id}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mismatch = match kind {
        StudyKind::Alignment => Some(build_mismatch_assignment(&segment_docs, seed)?),
        StudyKind::Realism => None,
    };
    if registry.stimuli.is_empty() {
        registry.stimuli = synthesize_stimuli(&condition_docs, &segment_docs, kind, mismatch.as_ref(), &uri_prefix)?;
    }
    registry.validate().map_err(|e| e.within("registry"))?;

    let pool = match (&mismatch, kind) {
        (Some(assignment), StudyKind::Alignment) => {
            let mut pool = Vec::new();
            for c in &conditions {
                pool.extend(generate_alignment_tasks(&registry, c, &segments, assignment, seed)?);
            }
            pool
        }
        _ => generate_realism_tasks(&registry, &conditions, &segments, &AdaptiveState::default(), seed)?,
    };
    let plan = StudyPlan {
        study_id,
        kind,
        seed,
        registry,
        conditions,
        segments,
        mismatch,
        session,
        early_stopping,
        pool,
    };
    plan.validate()?;
    Ok(plan)
}
