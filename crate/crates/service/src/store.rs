//! One directory per study: `plan.json`, an append-only `log.jsonl` and the
//! optional `adaptive.json`. A log append is acknowledged only after fsync.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gesteval::model::{LogEntry, SessionState, StudyLog};
use gesteval::study::{AdaptiveState, Scheduler, StudyError, StudyPlan};
use thiserror::Error;

pub const PLAN_FILE: &str = "plan.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const ADAPTIVE_FILE: &str = "adaptive.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Study(#[from] StudyError),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Live state of one study. Access is serialized by the caller.
#[derive(Debug)]
pub struct StudyState {
    pub plan: StudyPlan,
    pub scheduler: Scheduler,
    pub log: StudyLog,
    pub adaptive: AdaptiveState,
    dir: PathBuf,
    file: File,
    /// Set after a failed append; the in-memory state may then be ahead of
    /// disk, so writes are refused until a restart replays the log.
    poisoned: bool,
}

impl StudyState {
    /// Create the study directory. Fails if it already exists.
    pub fn create(dir: PathBuf, plan: StudyPlan) -> Result<Self, StoreError> {
        let scheduler = plan.scheduler()?;
        std::fs::create_dir(&dir).map_err(io_at(&dir))?;
        let json = serde_json::to_vec_pretty(&plan).expect("plans serialize");
        write_atomic(&dir.join(PLAN_FILE), &json)?;
        let log_path = dir.join(LOG_FILE);
        let file = open_append(&log_path)?;
        sync_dir(&dir)?;
        Ok(Self {
            plan,
            scheduler,
            log: StudyLog::new(),
            adaptive: AdaptiveState::default(),
            dir,
            file,
            poisoned: false,
        })
    }

    /// Reload a study, repairing a log whose last write was interrupted.
    pub fn open(dir: PathBuf) -> Result<Self, StoreError> {
        let plan_path = dir.join(PLAN_FILE);
        let text = std::fs::read_to_string(&plan_path).map_err(io_at(&plan_path))?;
        let plan: StudyPlan = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: plan_path.clone(),
            message: e.to_string(),
        })?;
        plan.validate()?;

        let log_path = dir.join(LOG_FILE);
        let log = recover_log(&log_path)?;

        let adaptive_path = dir.join(ADAPTIVE_FILE);
        let adaptive = match std::fs::read_to_string(&adaptive_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: adaptive_path.clone(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => AdaptiveState::default(),
            Err(e) => return Err(io_at(&adaptive_path)(e)),
        };

        let mut scheduler = plan.scheduler()?;
        if adaptive != AdaptiveState::default() {
            scheduler.set_pool(active_pool(&plan, &adaptive)?)?;
        }
        for s in log.sessions() {
            scheduler.restore(s.clone());
        }
        let file = open_append(&log_path)?;
        Ok(Self {
            plan,
            scheduler,
            log,
            adaptive,
            dir,
            file,
            poisoned: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Write entries as one buffer and fsync. The in-memory log is not touched.
    pub fn append(&mut self, entries: &[LogEntry]) -> io::Result<()> {
        if self.poisoned {
            return Err(io::Error::other("study storage failed earlier; restart to recover"));
        }
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&e.to_line().map_err(io::Error::other)?);
            buf.push('\n');
        }
        let res = self.file.write_all(buf.as_bytes()).and_then(|_| self.file.sync_data());
        if res.is_err() {
            self.poisoned = true;
        }
        res
    }

    pub fn save_adaptive(&mut self, state: AdaptiveState) -> Result<(), StoreError> {
        let json = serde_json::to_vec_pretty(&state).expect("adaptive state serializes");
        write_atomic(&self.dir.join(ADAPTIVE_FILE), &json)?;
        self.adaptive = state;
        Ok(())
    }
}

/// Realism pool without stopped pairs; empty once fewer than two
/// conditions remain in play.
pub fn active_pool(
    plan: &StudyPlan,
    adaptive: &AdaptiveState,
) -> Result<Vec<gesteval::model::ComparisonTask>, StudyError> {
    match plan.active_pool(adaptive) {
        Err(StudyError::TooFewConditions(_)) => Ok(Vec::new()),
        other => other,
    }
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io_at(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_at(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_at(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_at(path))?;
    if let Some(parent) = path.parent() {
        sync_dir(parent)?;
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> Result<(), StoreError> {
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_at(dir))
}

/// Parse the log, cutting back an interrupted tail:
/// a partial last line, and a vote whose progress record never made it
/// to disk (the submission was not acknowledged, so the taker will resend).
pub fn recover_log(path: &Path) -> Result<StudyLog, StoreError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(StudyLog::new()),
        Err(e) => return Err(io_at(path)(e)),
    };
    let corrupt = |line: usize, message: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };

    let mut entries: Vec<(usize, usize, LogEntry)> = Vec::new();
    let mut start = 0usize;
    let mut keep = bytes.len();
    let mut line_no = 0usize;
    while start < bytes.len() {
        line_no += 1;
        let (end, terminated) = match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(i) => (start + i, true),
            None => (bytes.len(), false),
        };
        let raw = &bytes[start..end];
        let parsed = std::str::from_utf8(raw)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    serde_json::from_str::<LogEntry>(s).map(Some).map_err(|e| e.to_string())
                }
            });
        match parsed {
            Ok(Some(entry)) => entries.push((start, line_no, entry)),
            Ok(None) => {}
            Err(_) if !terminated => {
                tracing::warn!(path = %path.display(), line = line_no, "dropping partial final log line");
                keep = start;
                break;
            }
            Err(msg) => return Err(corrupt(line_no, msg)),
        }
        start = end + 1;
    }

    let mut log = StudyLog::new();
    let n = entries.len();
    for (i, (offset, line, entry)) in entries.into_iter().enumerate() {
        if i + 1 == n {
            if let LogEntry::Vote(v) = &entry {
                let pending = log
                    .session(&v.session_id)
                    .is_some_and(|s| page_pending(s, v.page_index));
                if pending {
                    tracing::warn!(path = %path.display(), session = %v.session_id, "dropping unacknowledged vote");
                    keep = offset;
                    break;
                }
            }
        }
        log.push(entry).map_err(|e| corrupt(line, e.to_string()))?;
    }

    if keep < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(io_at(path))?;
        f.set_len(keep as u64).and_then(|_| f.sync_all()).map_err(io_at(path))?;
    } else if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        // Complete record that lost only its newline.
        let mut f = open_append(path)?;
        f.write_all(b"\n").and_then(|_| f.sync_data()).map_err(io_at(path))?;
    }
    Ok(log)
}

fn page_pending(s: &SessionState, page: u32) -> bool {
    (page as usize)
        .checked_sub(1)
        .and_then(|i| s.outcomes.get(i))
        .is_some_and(Option::is_none)
}
