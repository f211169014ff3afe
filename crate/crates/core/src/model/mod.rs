//! Shared evaluation entities.
//!
//! Everything here is a plain value type: conditions and segments from the
//! study registry, the stimuli rendered from them, the comparison tasks shown
//! to test takers, and the votes those takers leave behind. Identifiers are
//! caller-supplied opaque strings; nothing in the crate derives meaning from
//! their contents.

mod log;
mod registry;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{parse_log, parse_votes, serialize_log, serialize_votes, LogEntry, ResolvedVote, StudyLog};
pub use registry::Registry;

macro_rules! id_newtype {
    ($($(#[$meta:meta])* $name:ident),* $(,)?) => {$(
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    )*};
}

id_newtype!(
    /// One system under evaluation.
    ConditionId,
    SegmentId,
    StimulusId,
    TaskId,
    SessionId,
    /// Crowd-worker identity; at most one session per study.
    TakerId,
    StudyId,
);

/// Validation failure pointing at the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Prefix the field path, e.g. `votes[3]` + `.response`.
    pub fn within(mut self, prefix: impl fmt::Display) -> Self {
        self.path = if self.path.is_empty() {
            prefix.to_string()
        } else {
            format!("{prefix}.{}", self.path)
        };
        self
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid record: {0}")]
    Validation(#[from] ValidationError),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: expected a vote record, found a {found} record")]
    UnexpectedRecord { line: usize, found: &'static str },
    #[error("vote {session}#{page} references unknown task {task}")]
    UnknownTask {
        session: SessionId,
        page: u32,
        task: TaskId,
    },
    #[error("duplicate vote for session {session} page {page}")]
    DuplicateVote { session: SessionId, page: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Mocap,
    Generative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub id: ConditionId,
    pub display_name: String,
    pub kind: ConditionKind,
    /// 1 for deterministic systems, 5 otherwise.
    pub seeds_available: u32,
}

impl Condition {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.seeds_available == 0 {
            return Err(ValidationError::new("seeds_available", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactFlag {
    Flicking,
    MeshPenetration,
    /// Penetration that looks like clothing or tissue giving way.
    AcceptablePenetrationA,
    /// Finger clipping caused by poor finger tracking.
    AcceptablePenetrationB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub speaker_id: String,
    /// Recording the segment was cut from; segments of one take must not overlap.
    /// Falls back to the speaker when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub take_id: Option<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub transcript: String,
    /// Sentence-boundary flag from transcript metadata. When absent the
    /// transcript punctuation decides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_sentences: Option<bool>,
    #[serde(default)]
    pub artifact_flags: BTreeSet<ArtifactFlag>,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn take(&self) -> &str {
        self.take_id.as_deref().unwrap_or(&self.speaker_id)
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        self.take() == other.take() && self.start_s < other.end_s && other.start_s < self.end_s
    }

    pub fn is_sentence_complete(&self) -> bool {
        if let Some(flag) = self.complete_sentences {
            return flag;
        }
        let text = self.transcript.trim();
        let starts_ok = text
            .chars()
            .next()
            .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit() || c == '"' || c == '\'');
        let ends_ok = text
            .trim_end_matches(['"', '\'', ')'])
            .ends_with(['.', '!', '?']);
        starts_ok && ends_ok
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.start_s.is_finite() || !self.end_s.is_finite() {
            return Err(ValidationError::new("start_s", "times must be finite"));
        }
        if self.start_s < 0.0 {
            return Err(ValidationError::new("start_s", "must be non-negative"));
        }
        if self.start_s >= self.end_s {
            return Err(ValidationError::new("end_s", "must be greater than start_s"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub id: StimulusId,
    pub condition_id: ConditionId,
    pub segment_id: SegmentId,
    pub seed_index: u32,
    pub video_uri: String,
    /// Segment whose speech accompanies the video; equals `segment_id` when matched.
    pub audio_segment_id: SegmentId,
    pub muted: bool,
}

impl Stimulus {
    pub fn is_matched(&self) -> bool {
        self.audio_segment_id == self.segment_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Realism,
    Alignment,
}

impl StudyKind {
    pub fn question(self) -> &'static str {
        match self {
            StudyKind::Realism => "In which video does the character gesture more like a real person?",
            StudyKind::Alignment => "In which video do the character\u{2019}s movements fit the speech better?",
        }
    }

    pub fn preamble(self) -> &'static str {
        match self {
            StudyKind::Realism => "Below are two videos without audio of a character speaking and gesturing.",
            StudyKind::Alignment => {
                "Below are two videos of a character speaking and gesturing. Both videos have the same motion, but different speech."
            }
        }
    }

    pub fn juice_options(self) -> &'static [JuiceOption] {
        match self {
            StudyKind::Realism => &[
                JuiceOption::UnrealisticMotion,
                JuiceOption::Smoothness,
                JuiceOption::AmountAndIntensity,
                JuiceOption::RecognisableGestures,
                JuiceOption::Other,
            ],
            StudyKind::Alignment => &[
                JuiceOption::RhythmAndTiming,
                JuiceOption::EmphasisedCorrectPart,
                JuiceOption::ContentAndMeaning,
                JuiceOption::Emotion,
                JuiceOption::Other,
            ],
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Realism => "realism",
            StudyKind::Alignment => "alignment",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Clear,
    Slight,
}

/// Five-level preference answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    LeftClear,
    LeftSlight,
    Tie,
    RightSlight,
    RightClear,
}

impl Response {
    pub const ALL: [Response; 5] = [
        Response::LeftClear,
        Response::LeftSlight,
        Response::Tie,
        Response::RightSlight,
        Response::RightClear,
    ];

    pub fn preferred(self) -> Option<(Side, Strength)> {
        match self {
            Response::LeftClear => Some((Side::Left, Strength::Clear)),
            Response::LeftSlight => Some((Side::Left, Strength::Slight)),
            Response::Tie => None,
            Response::RightSlight => Some((Side::Right, Strength::Slight)),
            Response::RightClear => Some((Side::Right, Strength::Clear)),
        }
    }

    pub fn from_preference(side: Side, strength: Strength) -> Response {
        match (side, strength) {
            (Side::Left, Strength::Clear) => Response::LeftClear,
            (Side::Left, Strength::Slight) => Response::LeftSlight,
            (Side::Right, Strength::Slight) => Response::RightSlight,
            (Side::Right, Strength::Clear) => Response::RightClear,
        }
    }

    /// Position on the response bar, 1 (left clearly better) to 5.
    pub fn likert(self) -> u8 {
        match self {
            Response::LeftClear => 1,
            Response::LeftSlight => 2,
            Response::Tie => 3,
            Response::RightSlight => 4,
            Response::RightClear => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Response::LeftClear => "Left clearly better",
            Response::LeftSlight => "Left slightly better",
            Response::Tie => "They are equal",
            Response::RightSlight => "Right slightly better",
            Response::RightClear => "Right clearly better",
        }
    }

    pub fn mirrored(self) -> Response {
        match self {
            Response::LeftClear => Response::RightClear,
            Response::LeftSlight => Response::RightSlight,
            Response::Tie => Response::Tie,
            Response::RightSlight => Response::LeftSlight,
            Response::RightClear => Response::LeftClear,
        }
    }
}

/// Justification tickboxes. `Other` is shared by both study kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JuiceOption {
    UnrealisticMotion,
    Smoothness,
    AmountAndIntensity,
    RecognisableGestures,
    RhythmAndTiming,
    EmphasisedCorrectPart,
    ContentAndMeaning,
    Emotion,
    Other,
}

impl JuiceOption {
    pub fn label(self) -> &'static str {
        match self {
            JuiceOption::UnrealisticMotion => {
                "Unrealistic motion (glitches/artefacts, limbs/body penetrating each other, physically impossible motion)"
            }
            JuiceOption::Smoothness => "The smoothness of the motion",
            JuiceOption::AmountAndIntensity => "The amount and intensity of motion",
            JuiceOption::RecognisableGestures => "Recognisable gestures",
            JuiceOption::RhythmAndTiming => "Fit the rhythm and timing of the speech better",
            JuiceOption::EmphasisedCorrectPart => "Emphasised the correct part (or parts) of the speech",
            JuiceOption::ContentAndMeaning => "Better matched the content and meaning of the speech",
            JuiceOption::Emotion => "Better fit for the emotion of the speech",
            JuiceOption::Other => "Other (Please specify factors not listed above)",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            JuiceOption::UnrealisticMotion => "unrealistic_motion",
            JuiceOption::Smoothness => "smoothness",
            JuiceOption::AmountAndIntensity => "amount_and_intensity",
            JuiceOption::RecognisableGestures => "recognisable_gestures",
            JuiceOption::RhythmAndTiming => "rhythm_and_timing",
            JuiceOption::EmphasisedCorrectPart => "emphasised_correct_part",
            JuiceOption::ContentAndMeaning => "content_and_meaning",
            JuiceOption::Emotion => "emotion",
            JuiceOption::Other => "other",
        }
    }

    pub fn belongs_to(self, kind: StudyKind) -> bool {
        kind.juice_options().contains(&self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckModality {
    /// Overlay text on one of the two videos.
    VisualText,
    /// Speaker audio partly replaced by a synthetic voice.
    AudioVoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionCheck {
    pub target: Response,
    pub modality: CheckModality,
    pub side: Side,
    pub message: String,
    /// Replacement-audio locator for audio checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_uri: Option<String>,
}

impl AttentionCheck {
    pub fn message_for(target: Response) -> String {
        format!("[Attention check] Please choose '{}'.", target.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTask {
    pub id: TaskId,
    pub study_kind: StudyKind,
    pub left: Stimulus,
    pub right: Stimulus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_check: Option<AttentionCheck>,
}

impl ComparisonTask {
    pub fn stimulus(&self, side: Side) -> &Stimulus {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Side carrying the matched audio in an alignment task.
    pub fn matched_side(&self) -> Option<Side> {
        if self.study_kind != StudyKind::Alignment {
            return None;
        }
        match (self.left.is_matched(), self.right.is_matched()) {
            (true, false) => Some(Side::Left),
            (false, true) => Some(Side::Right),
            _ => None,
        }
    }

    pub fn swapped(&self) -> ComparisonTask {
        ComparisonTask {
            left: self.right.clone(),
            right: self.left.clone(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        match self.study_kind {
            StudyKind::Realism => {
                if self.left.segment_id != self.right.segment_id {
                    return Err(ValidationError::new("right.segment_id", "realism tasks compare one segment"));
                }
                if self.left.condition_id == self.right.condition_id {
                    return Err(ValidationError::new("right.condition_id", "realism tasks pair distinct conditions"));
                }
                if !self.left.muted || !self.right.muted {
                    return Err(ValidationError::new("left.muted", "realism stimuli are muted"));
                }
            }
            StudyKind::Alignment => {
                if self.left.condition_id != self.right.condition_id
                    || self.left.segment_id != self.right.segment_id
                    || self.left.seed_index != self.right.seed_index
                {
                    return Err(ValidationError::new("right", "alignment stimuli must share motion"));
                }
                if self.left.muted || self.right.muted {
                    return Err(ValidationError::new("left.muted", "alignment stimuli carry audio"));
                }
                if self.matched_side().is_none() {
                    return Err(ValidationError::new(
                        "right.audio_segment_id",
                        "exactly one side must carry matched audio",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub session_id: SessionId,
    pub taker_id: TakerId,
    pub page_index: u32,
    pub task_id: TaskId,
    /// Absent for skipped pages.
    pub response: Option<Response>,
    #[serde(default)]
    pub juice_options: BTreeSet<JuiceOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub juice_other_text: Option<String>,
    pub timestamp_ms: u64,
    #[serde(default)]
    pub skipped: bool,
}

impl VoteRecord {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.page_index == 0 {
            return Err(ValidationError::new("page_index", "pages are numbered from 1"));
        }
        if self.skipped {
            if self.response.is_some() {
                return Err(ValidationError::new("response", "skipped pages carry no response"));
            }
            if !self.juice_options.is_empty() {
                return Err(ValidationError::new("juice_options", "skipped pages carry no justification"));
            }
        } else {
            match self.response {
                None => return Err(ValidationError::new("response", "missing response")),
                Some(Response::Tie) if !self.juice_options.is_empty() => {
                    return Err(ValidationError::new("juice_options", "ties carry no justification"));
                }
                Some(r) if r != Response::Tie && self.juice_options.is_empty() => {
                    return Err(ValidationError::new(
                        "juice_options",
                        "a preference must tick at least one justification",
                    ));
                }
                _ => {}
            }
        }
        if self.juice_other_text.is_some() && !self.juice_options.contains(&JuiceOption::Other) {
            return Err(ValidationError::new("juice_other_text", "free text requires the Other option"));
        }
        Ok(())
    }

    /// Checks that depend on the task the vote answers.
    pub fn validate_against(&self, task: &ComparisonTask) -> Result<(), ValidationError> {
        if self.task_id != task.id {
            return Err(ValidationError::new("task_id", "does not match task"));
        }
        for opt in &self.juice_options {
            if !opt.belongs_to(task.study_kind) {
                return Err(ValidationError::new(
                    "juice_options",
                    format!("{} is not offered in {} studies", opt.code(), task.study_kind),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    /// Fourth skip; awaits manual review.
    Terminated,
    /// One failed attention check: responses dropped from analysis.
    Excluded,
    /// More than one failed attention check.
    Rejected,
}

impl SessionStatus {
    /// Whether votes from a session in this state may enter analysis.
    pub fn counts_in_analysis(self) -> bool {
        matches!(self, SessionStatus::Active | SessionStatus::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageOutcome {
    Answered,
    Skipped,
    AttentionPassed,
    AttentionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: SessionId,
    pub taker_id: TakerId,
    pub study_kind: StudyKind,
    pub pages: Vec<ComparisonTask>,
    /// 1-based page indices of the attention-check pages.
    pub attention_positions: Vec<u32>,
    pub skips_used: u32,
    pub status: SessionStatus,
    /// Outcome per page, `None` while pending.
    pub outcomes: Vec<Option<PageOutcome>>,
    #[serde(default)]
    pub attention_failures: u32,
    #[serde(default)]
    pub manual_review: bool,
}

impl SessionState {
    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn page(&self, page_index: u32) -> Option<&ComparisonTask> {
        self.pages.get((page_index as usize).checked_sub(1)?)
    }

    pub fn is_finished(&self) -> bool {
        self.status == SessionStatus::Terminated || self.outcomes.iter().all(Option::is_some)
    }

    pub fn apply_progress(&mut self, p: &SessionProgress) -> Result<(), ValidationError> {
        let path = || format!("progress {}#{}", p.session_id, p.page_index);
        if p.session_id != self.session_id {
            return Err(ValidationError::new(path(), "session mismatch"));
        }
        let slot = (p.page_index as usize)
            .checked_sub(1)
            .filter(|&i| i < self.outcomes.len())
            .ok_or_else(|| ValidationError::new(path(), "page out of range"))?;
        match self.outcomes[slot] {
            Some(o) if o != p.outcome => return Err(ValidationError::new(path(), "conflicts with a recorded outcome")),
            _ => {}
        }
        self.outcomes[slot] = Some(p.outcome);
        self.status = p.status;
        self.skips_used = p.skips_used;
        self.attention_failures = p.attention_failures;
        self.manual_review = p.manual_review;
        Ok(())
    }

    pub fn next_pending(&self) -> Option<u32> {
        if self.status == SessionStatus::Terminated {
            return None;
        }
        self.outcomes
            .iter()
            .position(Option::is_none)
            .map(|i| i as u32 + 1)
    }
}

/// What one submission did to a session; replayed onto the last snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionProgress {
    pub session_id: SessionId,
    pub page_index: u32,
    pub outcome: PageOutcome,
    pub status: SessionStatus,
    pub skips_used: u32,
    pub attention_failures: u32,
    pub manual_review: bool,
    pub timestamp_ms: u64,
}

impl SessionProgress {
    /// Progress record for `page_index` of an already-updated session.
    pub fn of(state: &SessionState, page_index: u32, timestamp_ms: u64) -> Option<Self> {
        let outcome = (*state.outcomes.get((page_index as usize).checked_sub(1)?)?)?;
        Some(Self {
            session_id: state.session_id.clone(),
            page_index,
            outcome,
            status: state.status,
            skips_used: state.skips_used,
            attention_failures: state.attention_failures,
            manual_review: state.manual_review,
            timestamp_ms,
        })
    }
}

/// Which estimate a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMetric {
    Elo,
    Appropriateness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    Battles,
    Takers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub condition: ConditionId,
    /// Mean over bootstrap replicates.
    pub point_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Estimate on the full, un-resampled data.
    pub full_sample: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wald_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseEntry {
    pub a: ConditionId,
    pub b: ConditionId,
    /// Mean replicate difference `a - b`.
    pub diff: f64,
    pub diff_ci_low: f64,
    pub diff_ci_high: f64,
    /// Expanded vote weight observed directly between `a` and `b`.
    pub weight: f64,
    pub p_raw: f64,
    pub p_fdr: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingReport {
    pub metric: ReportMetric,
    pub conditions: Vec<ConditionEstimate>,
    pub pairwise: Vec<PairwiseEntry>,
    pub alpha: f64,
    pub n_votes_used: usize,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub resample_unit: ResampleUnit,
    pub redrawn_replicates: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RatingReport {
    pub fn estimate(&self, condition: &ConditionId) -> Option<&ConditionEstimate> {
        self.conditions.iter().find(|c| &c.condition == condition)
    }

    /// Pairwise entry regardless of argument order.
    pub fn pair(&self, a: &ConditionId, b: &ConditionId) -> Option<&PairwiseEntry> {
        self.pairwise
            .iter()
            .find(|p| (&p.a == a && &p.b == b) || (&p.a == b && &p.b == a))
    }
}
