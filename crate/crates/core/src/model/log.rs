//! Line-delimited vote log.
//!
//! Each line is one self-describing JSON object tagged with `"type"`. A log
//! may interleave task definitions, session snapshots and votes; the analysis
//! side only needs the tasks the votes point at.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    ComparisonTask, ModelError, Side, SessionId, SessionProgress, SessionState, StudyKind, Strength, TaskId,
    ValidationError, VoteRecord,
};
use crate::model::ConditionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Task(ComparisonTask),
    Session(SessionState),
    /// Page outcome and session status after one submission.
    Progress(SessionProgress),
    Vote(VoteRecord),
}

impl LogEntry {
    fn kind(&self) -> &'static str {
        match self {
            LogEntry::Task(_) => "task",
            LogEntry::Session(_) => "session",
            LogEntry::Progress(_) => "progress",
            LogEntry::Vote(_) => "vote",
        }
    }

    pub fn to_line(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Serialize votes one per line. Every record is validated first.
pub fn serialize_votes(votes: &[VoteRecord]) -> Result<String, ModelError> {
    let mut out = String::new();
    for (i, vote) in votes.iter().enumerate() {
        vote.validate().map_err(|e| e.within(format!("votes[{i}]")))?;
        out.push_str(&serde_json::to_string(&LogEntry::Vote(vote.clone()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_votes(text: &str) -> Result<Vec<VoteRecord>, ModelError> {
    parse_log(text)?
        .into_iter()
        .enumerate()
        .map(|(i, entry)| match entry {
            LogEntry::Vote(v) => Ok(v),
            other => Err(ModelError::UnexpectedRecord {
                line: i + 1,
                found: other.kind(),
            }),
        })
        .collect()
}

pub fn serialize_log(entries: &[LogEntry]) -> Result<String, ModelError> {
    let mut out = String::new();
    for (i, entry) in entries.iter().enumerate() {
        match entry {
            LogEntry::Vote(v) => v.validate().map_err(|e| e.within(format!("entries[{i}]")))?,
            LogEntry::Task(t) => t.validate().map_err(|e| e.within(format!("entries[{i}]")))?,
            LogEntry::Session(_) | LogEntry::Progress(_) => {}
        }
        out.push_str(&entry.to_line()?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a log; blank lines are ignored and each record is validated.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, ModelError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry =
            serde_json::from_str(line).map_err(|source| ModelError::Parse { line: i + 1, source })?;
        let checked = match &entry {
            LogEntry::Vote(v) => v.validate(),
            LogEntry::Task(t) => t.validate(),
            LogEntry::Session(_) | LogEntry::Progress(_) => Ok(()),
        };
        checked.map_err(|e| e.within(format!("line {}", i + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// A vote joined with the task it answers.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedVote<'a> {
    pub vote: &'a VoteRecord,
    pub task: &'a ComparisonTask,
}

impl<'a> ResolvedVote<'a> {
    pub fn condition(&self, side: Side) -> &'a ConditionId {
        &self.task.stimulus(side).condition_id
    }

    pub fn preferred(&self) -> Option<(Side, Strength)> {
        self.vote.response.and_then(|r| r.preferred())
    }

    pub fn is_attention_check(&self) -> bool {
        self.task.attention_check.is_some()
    }

    pub fn is_analysis_vote(&self) -> bool {
        !self.vote.skipped && self.vote.response.is_some() && !self.is_attention_check()
    }
}

/// In-memory view of a log: tasks by id, the latest snapshot of every
/// session, and the votes in arrival order.
#[derive(Debug, Clone, Default)]
pub struct StudyLog {
    tasks: Vec<ComparisonTask>,
    task_index: HashMap<TaskId, usize>,
    sessions: HashMap<SessionId, SessionState>,
    votes: Vec<VoteRecord>,
    vote_keys: HashSet<(SessionId, u32)>,
}

impl StudyLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LogEntry>) -> Result<Self, ModelError> {
        let mut log = Self::new();
        for entry in entries {
            log.push(entry)?;
        }
        Ok(log)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        Self::from_entries(parse_log(text)?)
    }

    pub fn push(&mut self, entry: LogEntry) -> Result<(), ModelError> {
        match entry {
            LogEntry::Task(task) => self.add_task(task)?,
            LogEntry::Session(state) => {
                for page in &state.pages {
                    self.add_task(page.clone())?;
                }
                self.sessions.insert(state.session_id.clone(), state);
            }
            LogEntry::Progress(p) => {
                let state = self.sessions.get_mut(&p.session_id).ok_or_else(|| {
                    ValidationError::new(
                        format!("progress {}#{}", p.session_id, p.page_index),
                        "refers to a session without a snapshot",
                    )
                })?;
                state.apply_progress(&p)?;
            }
            LogEntry::Vote(vote) => self.add_vote(vote)?,
        }
        Ok(())
    }

    pub fn add_task(&mut self, task: ComparisonTask) -> Result<(), ModelError> {
        if let Some(&i) = self.task_index.get(&task.id) {
            if self.tasks[i] != task {
                return Err(ValidationError::new(
                    format!("task {}", task.id),
                    "conflicting redefinition of an existing task",
                )
                .into());
            }
            return Ok(());
        }
        self.task_index.insert(task.id.clone(), self.tasks.len());
        self.tasks.push(task);
        Ok(())
    }

    pub fn add_vote(&mut self, vote: VoteRecord) -> Result<(), ModelError> {
        vote.validate()?;
        let key = (vote.session_id.clone(), vote.page_index);
        if !self.vote_keys.insert(key) {
            return Err(ModelError::DuplicateVote {
                session: vote.session_id,
                page: vote.page_index,
            });
        }
        self.votes.push(vote);
        Ok(())
    }

    pub fn has_vote(&self, session: &SessionId, page: u32) -> bool {
        self.vote_keys.contains(&(session.clone(), page))
    }

    pub fn task(&self, id: &TaskId) -> Option<&ComparisonTask> {
        self.task_index.get(id).map(|&i| &self.tasks[i])
    }

    pub fn tasks(&self) -> &[ComparisonTask] {
        &self.tasks
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn session(&self, id: &SessionId) -> Option<&SessionState> {
        self.sessions.get(id)
    }

    /// Latest known state of every session, ordered by id.
    pub fn sessions(&self) -> Vec<&SessionState> {
        let mut out: Vec<&SessionState> = self.sessions.values().collect();
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    /// Join every vote with its task, checking referential integrity.
    pub fn resolve(&self) -> Result<Vec<ResolvedVote<'_>>, ModelError> {
        self.votes
            .iter()
            .map(|vote| {
                let task = self.task(&vote.task_id).ok_or_else(|| ModelError::UnknownTask {
                    session: vote.session_id.clone(),
                    page: vote.page_index,
                    task: vote.task_id.clone(),
                })?;
                vote.validate_against(task)
                    .map_err(|e| e.within(format!("vote {}#{}", vote.session_id, vote.page_index)))?;
                Ok(ResolvedVote { vote, task })
            })
            .collect()
    }

    /// Votes eligible for statistical analysis: answered, not attention
    /// checks, of the given study kind, and from sessions still in good
    /// standing (votes from sessions without a snapshot are kept).
    pub fn analysis_votes(&self, kind: StudyKind) -> Result<Vec<ResolvedVote<'_>>, ModelError> {
        Ok(self
            .resolve()?
            .into_iter()
            .filter(|rv| rv.task.study_kind == kind && rv.is_analysis_vote())
            .filter(|rv| {
                self.sessions
                    .get(&rv.vote.session_id)
                    .is_none_or(|s| s.status.counts_in_analysis())
            })
            .collect())
    }

    /// Entries in a canonical order: tasks, session snapshots (by id, with
    /// progress folded in), votes.
    pub fn entries(&self) -> Vec<LogEntry> {
        let mut sessions: Vec<_> = self.sessions.values().cloned().collect();
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        self.tasks
            .iter()
            .cloned()
            .map(LogEntry::Task)
            .chain(sessions.into_iter().map(LogEntry::Session))
            .chain(self.votes.iter().cloned().map(LogEntry::Vote))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JuiceOption, Response, Stimulus};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn stim(cond: &str, seg: &str) -> Stimulus {
        Stimulus {
            id: format!("{cond}-{seg}").into(),
            condition_id: cond.into(),
            segment_id: seg.into(),
            seed_index: 0,
            video_uri: format!("v/{cond}/{seg}.mp4"),
            audio_segment_id: seg.into(),
            muted: true,
        }
    }

    fn task() -> ComparisonTask {
        ComparisonTask {
            id: "t1".into(),
            study_kind: StudyKind::Realism,
            left: stim("a", "s1"),
            right: stim("b", "s1"),
            attention_check: None,
        }
    }

    fn arb_vote() -> impl Strategy<Value = VoteRecord> {
        let options = StudyKind::Realism.juice_options().to_vec();
        (
            "[a-z0-9]{1,8}",
            "[a-z0-9]{1,8}",
            1u32..=25,
            0usize..6,
            proptest::collection::btree_set(proptest::sample::select(options), 1..4),
            proptest::option::of("[ -~]{0,20}"),
            any::<u64>(),
        )
            .prop_map(|(session, taker, page, resp, opts, text, ts)| {
                let (response, skipped) = match resp {
                    5 => (None, true),
                    r => (Some(Response::ALL[r]), false),
                };
                let mut juice: BTreeSet<JuiceOption> = opts;
                let mut other = text;
                if skipped || response == Some(Response::Tie) {
                    juice.clear();
                    other = None;
                } else if other.is_some() {
                    juice.insert(JuiceOption::Other);
                }
                VoteRecord {
                    session_id: session.into(),
                    taker_id: taker.into(),
                    page_index: page,
                    task_id: "t1".into(),
                    response,
                    juice_options: juice,
                    juice_other_text: other,
                    timestamp_ms: ts,
                    skipped,
                }
            })
    }

    proptest! {
        #[test]
        fn votes_round_trip(votes in proptest::collection::vec(arb_vote(), 0..20)) {
            let text = serialize_votes(&votes).unwrap();
            prop_assert_eq!(text.lines().count(), votes.len());
            prop_assert_eq!(parse_votes(&text).unwrap(), votes);
        }
    }

    #[test]
    fn empty_list_serializes_to_nothing() {
        assert_eq!(serialize_votes(&[]).unwrap(), "");
        assert!(parse_votes("").unwrap().is_empty());
    }

    #[test]
    fn invalid_vote_reports_field_path() {
        let mut v = VoteRecord {
            session_id: "s".into(),
            taker_id: "t".into(),
            page_index: 1,
            task_id: "t1".into(),
            response: Some(Response::LeftClear),
            juice_options: BTreeSet::from([JuiceOption::Smoothness]),
            juice_other_text: None,
            timestamp_ms: 0,
            skipped: false,
        };
        let ok = v.clone();
        v.page_index = 0;
        let err = serialize_votes(&[ok, v]).unwrap_err();
        match err {
            ModelError::Validation(e) => assert_eq!(e.path, "votes[1].page_index"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_votes_rejects_task_lines() {
        let text = serialize_log(&[LogEntry::Task(task())]).unwrap();
        assert!(matches!(
            parse_votes(&text),
            Err(ModelError::UnexpectedRecord { line: 1, found: "task" })
        ));
    }

    #[test]
    fn unknown_task_is_reported() {
        let mut log = StudyLog::new();
        log.add_vote(VoteRecord {
            session_id: "s".into(),
            taker_id: "t".into(),
            page_index: 1,
            task_id: "nope".into(),
            response: Some(Response::Tie),
            juice_options: BTreeSet::new(),
            juice_other_text: None,
            timestamp_ms: 0,
            skipped: false,
        })
        .unwrap();
        assert!(matches!(log.resolve(), Err(ModelError::UnknownTask { .. })));
    }

    #[test]
    fn duplicate_page_is_rejected() {
        let v = VoteRecord {
            session_id: "s".into(),
            taker_id: "t".into(),
            page_index: 3,
            task_id: "t1".into(),
            response: Some(Response::Tie),
            juice_options: BTreeSet::new(),
            juice_other_text: None,
            timestamp_ms: 0,
            skipped: false,
        };
        let mut log = StudyLog::new();
        log.add_vote(v.clone()).unwrap();
        assert!(matches!(log.add_vote(v), Err(ModelError::DuplicateVote { page: 3, .. })));
    }

    #[test]
    fn conflicting_task_redefinition() {
        let mut log = StudyLog::new();
        log.add_task(task()).unwrap();
        log.add_task(task()).unwrap();
        assert!(log.add_task(task().swapped()).is_err());
    }

    #[test]
    fn juice_option_from_other_study_is_rejected() {
        let mut log = StudyLog::new();
        log.add_task(task()).unwrap();
        log.add_vote(VoteRecord {
            session_id: "s".into(),
            taker_id: "t".into(),
            page_index: 1,
            task_id: "t1".into(),
            response: Some(Response::LeftSlight),
            juice_options: [JuiceOption::Emotion].into_iter().collect(),
            juice_other_text: None,
            timestamp_ms: 0,
            skipped: false,
        })
        .unwrap();
        assert!(matches!(log.resolve(), Err(ModelError::Validation(_))));
    }
}
