//! Appropriateness scores from audio-mismatching votes.
//!
//! Each alignment page shows the same motion twice, once with its own speech
//! and once with speech from another segment. The score of a condition is the
//! share of preference weight that went to the matched side, with clear votes
//! weighted 2, slight votes 1 and ties split 0.5 / 0.5.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ConditionEstimate, ConditionId, PairwiseEntry, RatingReport, ReportMetric, ResampleUnit, ResolvedVote,
    SessionId, StudyKind, TakerId,
};
use crate::rating::strength_weight;
use crate::stats::{self, ReplicateMatrix, StatsError};

const MAX_REDRAWS_PER_REPLICATE: usize = 1000;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("vote {session}#{page} is not an answered, non-attention-check alignment vote")]
    IneligibleVote { session: SessionId, page: u32 },
    #[error("no votes for condition {0}; the score is undefined")]
    NoVotes(ConditionId),
    #[error("no alignment votes")]
    Empty,
    #[error("bootstrap replicate {replicate} kept missing a condition after redraws")]
    TooManyRedraws { replicate: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched_won_weight: f64,
    pub total_weight: f64,
}

impl MatchOutcome {
    pub fn score(&self) -> Option<f64> {
        (self.total_weight > 0.0).then(|| self.matched_won_weight / self.total_weight)
    }

    fn add(&mut self, other: MatchOutcome, times: f64) {
        self.matched_won_weight += other.matched_won_weight * times;
        self.total_weight += other.total_weight * times;
    }
}

/// Weight contributed by a single vote.
pub fn vote_outcome(rv: &ResolvedVote<'_>) -> Result<(ConditionId, MatchOutcome), AlignmentError> {
    let ineligible = || AlignmentError::IneligibleVote {
        session: rv.vote.session_id.clone(),
        page: rv.vote.page_index,
    };
    if rv.task.study_kind != StudyKind::Alignment || !rv.is_analysis_vote() {
        return Err(ineligible());
    }
    let matched = rv.task.matched_side().ok_or_else(ineligible)?;
    let response = rv.vote.response.ok_or_else(ineligible)?;
    let outcome = match response.preferred() {
        Some((side, strength)) => {
            let w = strength_weight(strength);
            MatchOutcome {
                matched_won_weight: if side == matched { w } else { 0.0 },
                total_weight: w,
            }
        }
        None => MatchOutcome {
            matched_won_weight: 0.5,
            total_weight: 1.0,
        },
    };
    Ok((rv.task.left.condition_id.clone(), outcome))
}

/// Summed weights per condition.
pub fn match_outcomes(votes: &[ResolvedVote<'_>]) -> Result<BTreeMap<ConditionId, MatchOutcome>, AlignmentError> {
    let mut out: BTreeMap<ConditionId, MatchOutcome> = BTreeMap::new();
    for rv in votes {
        let (cond, o) = vote_outcome(rv)?;
        out.entry(cond)
            .or_insert(MatchOutcome {
                matched_won_weight: 0.0,
                total_weight: 0.0,
            })
            .add(o, 1.0);
    }
    Ok(out)
}

/// Appropriateness score of one condition in [0, 1].
pub fn score_condition(votes: &[ResolvedVote<'_>], condition: &ConditionId) -> Result<f64, AlignmentError> {
    match_outcomes(votes)?
        .get(condition)
        .and_then(MatchOutcome::score)
        .ok_or_else(|| AlignmentError::NoVotes(condition.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub n_bootstrap: usize,
    pub rng_seed: u64,
    pub resample: ResampleUnit,
    pub alpha: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            n_bootstrap: 1000,
            rng_seed: 0,
            resample: ResampleUnit::Takers,
            alpha: 0.05,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        if self.n_bootstrap == 0 {
            return Err(AlignmentError::InvalidConfig("n_bootstrap must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AlignmentError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapScores {
    pub conditions: Vec<ConditionId>,
    pub full_sample: Vec<f64>,
    pub replicates: ReplicateMatrix,
    /// `(mean, ci_low, ci_high)` per condition.
    pub summaries: Vec<(f64, f64, f64)>,
    pub totals: Vec<f64>,
    pub redrawn_replicates: usize,
    pub warnings: Vec<String>,
}

impl BootstrapScores {
    pub fn summary(&self, id: &ConditionId) -> Option<(f64, f64, f64)> {
        self.conditions.iter().position(|c| c == id).map(|i| self.summaries[i])
    }
}

type Contribution = Vec<(usize, MatchOutcome)>;

/// Resample takers (or single votes) with replacement and rescore every condition.
pub fn bootstrap_scores(votes: &[ResolvedVote<'_>], cfg: &ScoreConfig) -> Result<BootstrapScores, AlignmentError> {
    cfg.validate()?;
    if votes.is_empty() {
        return Err(AlignmentError::Empty);
    }
    let outcomes: Vec<(ConditionId, MatchOutcome)> = votes.iter().map(vote_outcome).collect::<Result<_, _>>()?;
    let conditions: Vec<ConditionId> = outcomes
        .iter()
        .map(|(c, _)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&ConditionId, usize> = conditions.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = conditions.len();

    let mut units: Vec<Contribution> = Vec::new();
    let mut takers_per_condition: Vec<BTreeSet<&TakerId>> = vec![BTreeSet::new(); n];
    match cfg.resample {
        ResampleUnit::Battles => {
            units.extend(outcomes.iter().map(|(c, o)| vec![(index[c], *o)]));
        }
        ResampleUnit::Takers => {
            let mut per_taker: BTreeMap<&TakerId, BTreeMap<usize, MatchOutcome>> = BTreeMap::new();
            for (rv, (c, o)) in votes.iter().zip(&outcomes) {
                per_taker
                    .entry(&rv.vote.taker_id)
                    .or_default()
                    .entry(index[c])
                    .or_insert(MatchOutcome {
                        matched_won_weight: 0.0,
                        total_weight: 0.0,
                    })
                    .add(*o, 1.0);
            }
            units.extend(per_taker.into_values().map(|m| m.into_iter().collect()));
        }
    }
    for (rv, (c, _)) in votes.iter().zip(&outcomes) {
        takers_per_condition[index[c]].insert(&rv.vote.taker_id);
    }

    let sum_units = |counts: &[f64]| -> Vec<MatchOutcome> {
        let mut acc = vec![
            MatchOutcome {
                matched_won_weight: 0.0,
                total_weight: 0.0
            };
            n
        ];
        for (unit, &k) in units.iter().zip(counts) {
            if k > 0.0 {
                for &(c, o) in unit {
                    acc[c].add(o, k);
                }
            }
        }
        acc
    };
    let full = sum_units(&vec![1.0; units.len()]);
    let full_sample: Vec<f64> = full.iter().map(|o| o.score().unwrap_or(f64::NAN)).collect();
    let totals: Vec<f64> = full.iter().map(|o| o.total_weight).collect();

    let n_units = units.len() as u64;
    let probs = vec![1.0 / units.len() as f64; units.len()];
    let results: Vec<(Vec<f64>, usize)> = (0..cfg.n_bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = stats::replicate_rng(cfg.rng_seed, r as u64);
            for redraws in 0..MAX_REDRAWS_PER_REPLICATE {
                let draw: Vec<f64> = stats::multinomial(&mut rng, n_units, &probs)
                    .into_iter()
                    .map(|k| k as f64)
                    .collect();
                let scores: Option<Vec<f64>> = sum_units(&draw).iter().map(MatchOutcome::score).collect();
                if let Some(s) = scores {
                    return Ok((s, redraws));
                }
            }
            Err(AlignmentError::TooManyRedraws { replicate: r })
        })
        .collect::<Result<_, _>>()?;

    let redrawn_replicates = results.iter().filter(|(_, k)| *k > 0).count();
    let replicates = ReplicateMatrix {
        conditions: conditions.clone(),
        rows: results.into_iter().map(|(row, _)| row).collect(),
    };
    let summaries = (0..n)
        .map(|j| stats::percentile_summary(&replicates.column(j), 0.95))
        .collect();

    let mut warnings = Vec::new();
    for (c, takers) in conditions.iter().zip(&takers_per_condition) {
        if takers.len() == 1 && cfg.resample == ResampleUnit::Takers {
            warnings.push(format!("condition {c} has a single test taker; its interval is degenerate"));
        }
    }
    if redrawn_replicates as f64 > 0.01 * cfg.n_bootstrap as f64 {
        warnings.push(format!(
            "{redrawn_replicates} of {} bootstrap replicates were redrawn because a condition had no votes",
            cfg.n_bootstrap
        ));
    }
    Ok(BootstrapScores {
        conditions,
        full_sample,
        replicates,
        summaries,
        totals,
        redrawn_replicates,
        warnings,
    })
}

/// FDR-adjusted tests on score differences.
pub fn pairwise_diff_significance(boot: &BootstrapScores, alpha: f64) -> Result<Vec<PairwiseEntry>, AlignmentError> {
    Ok(stats::pairwise_significance(&boot.replicates, alpha, |i, j| {
        boot.totals[i] + boot.totals[j]
    })?)
}

/// Appropriateness report with intervals and pairwise tests.
pub fn appropriateness_report(votes: &[ResolvedVote<'_>], cfg: &ScoreConfig) -> Result<RatingReport, AlignmentError> {
    let boot = bootstrap_scores(votes, cfg)?;
    let pairwise = if boot.conditions.len() >= 2 {
        pairwise_diff_significance(&boot, cfg.alpha)?
    } else {
        Vec::new()
    };
    let conditions = boot
        .conditions
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (mean, lo, hi) = boot.summaries[i];
            ConditionEstimate {
                condition: id.clone(),
                point_estimate: mean,
                ci_low: lo,
                ci_high: hi,
                full_sample: boot.full_sample[i],
                wald_ci: None,
            }
        })
        .collect();
    Ok(RatingReport {
        metric: ReportMetric::Appropriateness,
        conditions,
        pairwise,
        alpha: cfg.alpha,
        n_votes_used: votes.len(),
        n_bootstrap: cfg.n_bootstrap,
        seed: cfg.rng_seed,
        resample_unit: cfg.resample,
        redrawn_replicates: boot.redrawn_replicates,
        warnings: boot.warnings,
    })
}
