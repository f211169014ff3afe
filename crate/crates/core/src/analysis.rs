//! Log-level entry points shared by the command line and the HTTP service, so
//! both produce the same numbers from the same log and seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{self, AlignmentError, ScoreConfig};
use crate::juice::{self, JuiceError, JuiceNormalization, JuiceProfile};
use crate::model::{ModelError, RatingReport, Registry, StudyKind, StudyLog};
use crate::rating::{self, EloConfig, RatingError};
use crate::stats::csv_field;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Juice(#[from] JuiceError),
}

/// Coarse failure class, used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Malformed or inconsistent input.
    Validation,
    /// Valid input on which the estimate is undefined.
    Computation,
}

impl AnalysisError {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            AnalysisError::Model(_) => Validation,
            AnalysisError::Rating(e) => match e {
                RatingError::IneligibleVote { .. }
                | RatingError::SelfBattle(_)
                | RatingError::InvalidWeight(_)
                | RatingError::InvalidConfig(_) => Validation,
                _ => Computation,
            },
            AnalysisError::Alignment(e) => match e {
                AlignmentError::IneligibleVote { .. } | AlignmentError::InvalidConfig(_) => Validation,
                _ => Computation,
            },
            AnalysisError::Juice(e) => match e {
                JuiceError::MixedStudyKinds | JuiceError::Csv(_) => Validation,
                _ => Computation,
            },
        }
    }
}

pub fn leaderboard_from_log(log: &StudyLog, cfg: &EloConfig) -> Result<RatingReport, AnalysisError> {
    let votes = log.analysis_votes(StudyKind::Realism)?;
    Ok(rating::leaderboard(&votes, cfg)?)
}

pub fn appropriateness_from_log(log: &StudyLog, cfg: &ScoreConfig) -> Result<RatingReport, AnalysisError> {
    let votes = log.analysis_votes(StudyKind::Alignment)?;
    Ok(alignment::appropriateness_report(&votes, cfg)?)
}

pub fn juice_from_log(
    log: &StudyLog,
    kind: StudyKind,
    registry: &Registry,
    normalization: JuiceNormalization,
) -> Result<Vec<JuiceProfile>, AnalysisError> {
    let votes = log.analysis_votes(kind)?;
    Ok(juice::juice_report(&votes, registry, normalization)?)
}

/// Conditions ranked by point estimate, best first.
pub fn report_to_csv(report: &RatingReport) -> String {
    let mut rows: Vec<_> = report.conditions.iter().collect();
    rows.sort_by(|a, b| b.point_estimate.total_cmp(&a.point_estimate).then(a.condition.cmp(&b.condition)));
    let mut out = String::from("rank,condition,estimate,ci_low,ci_high,full_sample\n");
    for (i, c) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            csv_field(c.condition.as_str()),
            c.point_estimate,
            c.ci_low,
            c.ci_high,
            c.full_sample
        ));
    }
    out
}

pub fn pairwise_to_csv(report: &RatingReport) -> String {
    let mut out = String::from("a,b,diff,diff_ci_low,diff_ci_high,weight,p_raw,p_fdr,significant\n");
    for p in &report.pairwise {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(p.a.as_str()),
            csv_field(p.b.as_str()),
            p.diff,
            p.diff_ci_low,
            p.diff_ci_high,
            p.weight,
            p.p_raw,
            p.p_fdr,
            p.significant
        ));
    }
    out
}
