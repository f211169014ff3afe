//! Justification ("JUICE") tick counts per condition.
//!
//! Every non-tie vote ticks one or more reasons. For a focus condition we
//! count, per reason, the votes it won and the votes it lost in which that
//! reason was ticked. Clear and slight preferences count once each.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConditionId, ConditionKind, JuiceOption, Registry, ResolvedVote, Side, StudyKind};

#[derive(Debug, Error, PartialEq)]
pub enum JuiceError {
    #[error("no non-tie comparisons for {0}; the profile is undefined")]
    NoComparisons(ConditionId),
    #[error("votes mix realism and alignment studies")]
    MixedStudyKinds,
    #[error("no votes")]
    Empty,
    #[error("csv export failed: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JuiceNormalization {
    /// Divide tick counts by the number of non-tie comparisons.
    #[default]
    NonTieComparisons,
    /// Divide by all ticks on the win (loss) side so shares sum to one.
    OptionShare,
}

/// Which opponents count in a realism profile.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentFilter {
    #[default]
    Any,
    Only(Vec<ConditionId>),
}

impl OpponentFilter {
    /// Realism default: against the mocap condition when the registry has one.
    pub fn default_for(kind: StudyKind, registry: &Registry) -> Self {
        match (kind, registry.conditions.iter().find(|c| c.kind == ConditionKind::Mocap)) {
            (StudyKind::Realism, Some(m)) => OpponentFilter::Only(vec![m.id.clone()]),
            _ => OpponentFilter::Any,
        }
    }

    fn admits(&self, opponent: &ConditionId) -> bool {
        match self {
            OpponentFilter::Any => true,
            OpponentFilter::Only(ids) => ids.contains(opponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuiceRow {
    pub option: JuiceOption,
    pub label: String,
    pub win_count: u64,
    pub loss_count: u64,
    pub win_fraction: f64,
    pub loss_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeText {
    pub won: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuiceProfile {
    pub study_kind: StudyKind,
    pub condition: ConditionId,
    pub opponents: OpponentFilter,
    pub normalization: JuiceNormalization,
    pub comparisons: u64,
    pub wins: u64,
    pub losses: u64,
    pub rows: Vec<JuiceRow>,
    /// "Other" free text, verbatim and in log order.
    pub other_texts: Vec<FreeText>,
}

impl JuiceProfile {
    pub fn row(&self, option: JuiceOption) -> Option<&JuiceRow> {
        self.rows.iter().find(|r| r.option == option)
    }
}

fn study_kind(votes: &[ResolvedVote<'_>]) -> Result<StudyKind, JuiceError> {
    let kind = votes.first().ok_or(JuiceError::Empty)?.task.study_kind;
    if votes.iter().any(|v| v.task.study_kind != kind) {
        return Err(JuiceError::MixedStudyKinds);
    }
    Ok(kind)
}

/// Did `focus` win this vote? `None` when the vote is a tie or not about `focus`.
fn focus_won(rv: &ResolvedVote<'_>, focus: &ConditionId, filter: &OpponentFilter) -> Option<bool> {
    let (side, _) = rv.preferred()?;
    match rv.task.study_kind {
        StudyKind::Realism => {
            let focus_side = if rv.condition(Side::Left) == focus {
                Side::Left
            } else if rv.condition(Side::Right) == focus {
                Side::Right
            } else {
                return None;
            };
            filter
                .admits(rv.condition(focus_side.other()))
                .then_some(side == focus_side)
        }
        StudyKind::Alignment => {
            if rv.condition(Side::Left) != focus {
                return None;
            }
            rv.task.matched_side().map(|m| m == side)
        }
    }
}

pub fn aggregate_juice(
    votes: &[ResolvedVote<'_>],
    focus: &ConditionId,
    filter: &OpponentFilter,
    normalization: JuiceNormalization,
) -> Result<JuiceProfile, JuiceError> {
    let kind = study_kind(votes)?;
    let options = kind.juice_options();
    let mut win_ticks: BTreeMap<JuiceOption, u64> = options.iter().map(|&o| (o, 0)).collect();
    let mut loss_ticks = win_ticks.clone();
    let (mut wins, mut losses) = (0u64, 0u64);
    let mut other_texts = Vec::new();

    for rv in votes.iter().filter(|v| v.is_analysis_vote()) {
        let Some(won) = focus_won(rv, focus, filter) else {
            continue;
        };
        let ticks = if won {
            wins += 1;
            &mut win_ticks
        } else {
            losses += 1;
            &mut loss_ticks
        };
        for opt in &rv.vote.juice_options {
            if let Some(c) = ticks.get_mut(opt) {
                *c += 1;
            }
        }
        if let Some(text) = &rv.vote.juice_other_text {
            other_texts.push(FreeText {
                won,
                text: text.clone(),
            });
        }
    }

    let comparisons = wins + losses;
    if comparisons == 0 {
        return Err(JuiceError::NoComparisons(focus.clone()));
    }
    let (win_den, loss_den) = match normalization {
        JuiceNormalization::NonTieComparisons => (comparisons, comparisons),
        JuiceNormalization::OptionShare => (win_ticks.values().sum(), loss_ticks.values().sum()),
    };
    let frac = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let rows = options
        .iter()
        .map(|&o| JuiceRow {
            option: o,
            label: o.label().to_owned(),
            win_count: win_ticks[&o],
            loss_count: loss_ticks[&o],
            win_fraction: frac(win_ticks[&o], win_den),
            loss_fraction: frac(loss_ticks[&o], loss_den),
        })
        .collect();
    Ok(JuiceProfile {
        study_kind: kind,
        condition: focus.clone(),
        opponents: filter.clone(),
        normalization,
        comparisons,
        wins,
        losses,
        rows,
        other_texts,
    })
}

/// Profiles for every condition with at least one non-tie comparison under
/// the default opponent filter. The mocap condition is skipped in realism
/// studies when it is the filter target.
pub fn juice_report(
    votes: &[ResolvedVote<'_>],
    registry: &Registry,
    normalization: JuiceNormalization,
) -> Result<Vec<JuiceProfile>, JuiceError> {
    let kind = study_kind(votes)?;
    let filter = OpponentFilter::default_for(kind, registry);
    let mut conditions: Vec<&ConditionId> = votes
        .iter()
        .flat_map(|v| [v.condition(Side::Left), v.condition(Side::Right)])
        .collect();
    conditions.sort();
    conditions.dedup();
    let mut out = Vec::new();
    for c in conditions {
        match aggregate_juice(votes, c, &filter, normalization) {
            Ok(p) => out.push(p),
            Err(JuiceError::NoComparisons(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(JuiceError::Empty);
    }
    Ok(out)
}

/// One row per (condition, option).
pub fn profiles_to_csv(profiles: &[JuiceProfile]) -> Result<String, JuiceError> {
    let err = |e: csv::Error| JuiceError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "condition",
        "option",
        "label",
        "win_fraction",
        "loss_fraction",
        "win_count",
        "loss_count",
        "comparisons",
    ])
    .map_err(err)?;
    for p in profiles {
        for r in &p.rows {
            w.write_record([
                p.condition.as_str(),
                r.option.code(),
                &r.label,
                &r.win_fraction.to_string(),
                &r.loss_fraction.to_string(),
                &r.win_count.to_string(),
                &r.loss_count.to_string(),
                &p.comparisons.to_string(),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| JuiceError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Free-text answers, verbatim.
pub fn free_text_to_csv(profiles: &[JuiceProfile]) -> Result<String, JuiceError> {
    let err = |e: csv::Error| JuiceError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["condition", "outcome", "text"]).map_err(err)?;
    for p in profiles {
        for t in &p.other_texts {
            w.write_record([p.condition.as_str(), if t.won { "win" } else { "loss" }, &t.text])
                .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| JuiceError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
