//! Bradley-Terry Elo ratings from pairwise realism votes.
//!
//! Votes are expanded into weighted battles (clear = 2, slight = 1, tie =
//! two half-weight battles in opposite directions) and the ratings are the
//! weighted maximum-likelihood solution of
//!
//! ```text
//! P(A beats B) = 1 / (1 + base^((R_B - R_A) / scale))
//! ```
//!
//! fitted in one batch with Newton's method and shifted so their mean sits at
//! the anchor. Uncertainty comes from non-parametric bootstrap refits, with
//! optional Wald intervals from the observed information.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ConditionEstimate, ConditionId, RatingReport, ReportMetric, ResampleUnit, ResolvedVote, SessionId,
    Side, Strength, StudyKind, TakerId,
};
use crate::stats::{self, ReplicateMatrix, StatsError};

/// Replicates redrawn because the resample left the comparison graph
/// unidentifiable are reported once they exceed this share.
const REDRAW_WARN_FRACTION: f64 = 0.01;
const MAX_REDRAWS_PER_REPLICATE: usize = 1000;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("vote {session}#{page} is not an answered, non-attention-check realism vote")]
    IneligibleVote { session: SessionId, page: u32 },
    #[error("no battles to fit")]
    NoBattles,
    #[error("battle between {0} and itself")]
    SelfBattle(ConditionId),
    #[error("battle weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("comparison graph is disconnected: {}", format_groups(.components))]
    Disconnected { components: Vec<Vec<ConditionId>> },
    #[error("ratings are not identifiable: {} never lose to the rest", format_groups(std::slice::from_ref(.undefeated)))]
    NonIdentifiable { undefeated: Vec<ConditionId> },
    #[error("optimizer did not converge (gradient norm {gradient_norm:e} after {iterations} iterations)")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("bootstrap replicate {replicate} could not be redrawn into an identifiable sample")]
    TooManyRedraws { replicate: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn format_groups(groups: &[Vec<ConditionId>]) -> String {
    groups
        .iter()
        .map(|g| {
            let names: Vec<&str> = g.iter().map(ConditionId::as_str).collect();
            format!("{{{}}}", names.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BattleOutcome {
    AWins,
    BWins,
    /// Half a win for each side.
    HalfHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battle {
    pub model_a: ConditionId,
    pub model_b: ConditionId,
    pub outcome: BattleOutcome,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloConfig {
    pub scale: f64,
    pub base: f64,
    pub anchor_mean: f64,
    pub n_bootstrap: usize,
    pub rng_seed: u64,
    pub resample: ResampleUnit,
    pub alpha: f64,
    /// Convergence threshold on the log-likelihood gradient norm, per unit
    /// of total battle weight (at least 1).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Also report Wald intervals from the observed information.
    pub wald: bool,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            scale: 400.0,
            base: 10.0,
            anchor_mean: 1000.0,
            n_bootstrap: 1000,
            rng_seed: 0,
            resample: ResampleUnit::Battles,
            alpha: 0.05,
            tolerance: 1e-8,
            max_iterations: 100,
            wald: false,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<(), RatingError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(RatingError::InvalidConfig(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.base > 1.0 && self.base.is_finite()) {
            return Err(RatingError::InvalidConfig(format!("base must exceed 1, got {}", self.base)));
        }
        if self.n_bootstrap == 0 {
            return Err(RatingError::InvalidConfig("n_bootstrap must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RatingError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Natural-log odds per Elo point.
    fn slope(&self) -> f64 {
        self.base.ln() / self.scale
    }
}

/// Eq. for the expected win rate of `r_a` against `r_b`.
pub fn predict_win_prob(r_a: f64, r_b: f64, cfg: &EloConfig) -> f64 {
    1.0 / (1.0 + cfg.base.powf((r_b - r_a) / cfg.scale))
}

/// Expand answered realism votes into weighted battles.
pub fn expand_votes(votes: &[ResolvedVote<'_>]) -> Result<Vec<Battle>, RatingError> {
    let mut battles = Vec::with_capacity(votes.len() + votes.len() / 4);
    for rv in votes {
        let response = match rv.vote.response {
            Some(r) if rv.is_analysis_vote() && rv.task.study_kind == StudyKind::Realism => r,
            _ => {
                return Err(RatingError::IneligibleVote {
                    session: rv.vote.session_id.clone(),
                    page: rv.vote.page_index,
                })
            }
        };
        let a = rv.condition(Side::Left).clone();
        let b = rv.condition(Side::Right).clone();
        match response.preferred() {
            Some((side, strength)) => battles.push(Battle {
                model_a: a,
                model_b: b,
                outcome: if side == Side::Left { BattleOutcome::AWins } else { BattleOutcome::BWins },
                weight: strength_weight(strength),
            }),
            None => {
                battles.push(Battle {
                    model_a: a.clone(),
                    model_b: b.clone(),
                    outcome: BattleOutcome::AWins,
                    weight: 0.5,
                });
                battles.push(Battle {
                    model_a: a,
                    model_b: b,
                    outcome: BattleOutcome::BWins,
                    weight: 0.5,
                });
            }
        }
    }
    Ok(battles)
}

pub(crate) fn strength_weight(strength: Strength) -> f64 {
    match strength {
        Strength::Clear => 2.0,
        Strength::Slight => 1.0,
    }
}

/// Dense directed win-weight table: `wins[i * n + j]` is the weight of `i` beating `j`.
#[derive(Debug, Clone, PartialEq)]
struct WinTable {
    n: usize,
    wins: Vec<f64>,
}

impl WinTable {
    fn new(n: usize) -> Self {
        Self { n, wins: vec![0.0; n * n] }
    }

    fn add(&mut self, a: usize, b: usize, outcome: BattleOutcome, weight: f64) {
        let n = self.n;
        match outcome {
            BattleOutcome::AWins => self.wins[a * n + b] += weight,
            BattleOutcome::BWins => self.wins[b * n + a] += weight,
            BattleOutcome::HalfHalf => {
                self.wins[a * n + b] += weight / 2.0;
                self.wins[b * n + a] += weight / 2.0;
            }
        }
    }

    fn w(&self, i: usize, j: usize) -> f64 {
        self.wins[i * self.n + j]
    }

    fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.w(i, j) + self.w(j, i)
    }

    /// Transitive closure of the relation `rel(i, j)`.
    fn reachability(&self, rel: impl Fn(usize, usize) -> bool) -> Vec<bool> {
        let n = self.n;
        let mut reach = vec![false; n * n];
        for i in 0..n {
            reach[i * n + i] = true;
            for j in 0..n {
                if rel(i, j) {
                    reach[i * n + j] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i * n + k] {
                    for j in 0..n {
                        if reach[k * n + j] {
                            reach[i * n + j] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    /// The MLE is finite and unique iff the "beat" digraph is strongly connected.
    fn check_identifiable(&self, ids: &[ConditionId]) -> Result<(), RatingError> {
        let n = self.n;
        let undirected = self.reachability(|i, j| self.pair_weight(i, j) > 0.0);
        let mut assigned = vec![false; n];
        let mut components = Vec::new();
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let comp: Vec<usize> = (0..n).filter(|&j| undirected[i * n + j]).collect();
            for &j in &comp {
                assigned[j] = true;
            }
            components.push(comp.iter().map(|&j| ids[j].clone()).collect::<Vec<_>>());
        }
        if components.len() > 1 {
            return Err(RatingError::Disconnected { components });
        }

        let directed = self.reachability(|i, j| self.w(i, j) > 0.0);
        if directed.iter().all(|&r| r) {
            return Ok(());
        }
        // A source component: everyone it can be reached from is inside it.
        for i in 0..n {
            let scc: Vec<usize> = (0..n).filter(|&j| directed[i * n + j] && directed[j * n + i]).collect();
            let is_source = (0..n).all(|j| !directed[j * n + i] || scc.contains(&j));
            if is_source {
                return Err(RatingError::NonIdentifiable {
                    undefeated: scc.iter().map(|&j| ids[j].clone()).collect(),
                });
            }
        }
        unreachable!("a condensation DAG always has a source component")
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Fit {
    /// Centred log-odds strengths.
    theta: Vec<f64>,
    iterations: usize,
    log_likelihood: f64,
}

fn log_likelihood(table: &WinTable, theta: &[f64]) -> f64 {
    let n = table.n;
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = table.w(i, j);
            if w > 0.0 {
                ll += w * log_sigmoid(theta[i] - theta[j]);
            }
        }
    }
    ll
}

/// Gradient and negated Hessian of the weighted log-likelihood.
fn derivatives(table: &WinTable, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = table.n;
    let mut grad = DVector::zeros(n);
    let mut info = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let total = table.pair_weight(i, j);
            if total == 0.0 {
                continue;
            }
            let p = sigmoid(theta[i] - theta[j]);
            let g = table.w(i, j) - total * p;
            grad[i] += g;
            grad[j] -= g;
            let h = total * p * (1.0 - p);
            info[(i, i)] += h;
            info[(j, j)] += h;
            info[(i, j)] -= h;
            info[(j, i)] -= h;
        }
    }
    (grad, info)
}

fn fit_table(table: &WinTable, ids: &[ConditionId], cfg: &EloConfig) -> Result<Fit, RatingError> {
    table.check_identifiable(ids)?;
    let n = table.n;
    let mut theta = vec![0.0; n];
    if n == 1 {
        return Ok(Fit { theta, iterations: 0, log_likelihood: 0.0 });
    }
    let mut ll = log_likelihood(table, &theta);
    let ones = DMatrix::from_element(n, n, 1.0);
    let threshold = cfg.tolerance * table.wins.iter().sum::<f64>().max(1.0);
    for iteration in 0..=cfg.max_iterations {
        let (grad, info) = derivatives(table, &theta);
        let gnorm = grad.norm();
        if gnorm <= threshold {
            return Ok(Fit { theta, iterations: iteration, log_likelihood: ll });
        }
        if iteration == cfg.max_iterations {
            return Err(RatingError::NotConverged { iterations: iteration, gradient_norm: gnorm });
        }
        // The information matrix is a weighted graph Laplacian; adding the
        // all-ones matrix pins the step to the mean-zero subspace.
        let step = (info + &ones)
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or(RatingError::NotConverged { iterations: iteration, gradient_norm: gnorm })?;
        let mut scale = 1.0;
        loop {
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let cand_ll = log_likelihood(table, &candidate);
            if cand_ll >= ll || scale < 1e-12 {
                theta = candidate;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        let mean = theta.iter().sum::<f64>() / n as f64;
        theta.iter_mut().for_each(|t| *t -= mean);
    }
    unreachable!()
}

fn to_elo(theta: &[f64], cfg: &EloConfig) -> Vec<f64> {
    let slope = cfg.slope();
    let mean = theta.iter().sum::<f64>() / theta.len() as f64;
    theta.iter().map(|t| cfg.anchor_mean + (t - mean) / slope).collect()
}

/// Fitted ratings in condition-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratings {
    pub conditions: Vec<ConditionId>,
    pub ratings: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl Ratings {
    pub fn get(&self, id: &ConditionId) -> Option<f64> {
        self.conditions.iter().position(|c| c == id).map(|i| self.ratings[i])
    }

    pub fn to_map(&self) -> BTreeMap<ConditionId, f64> {
        self.conditions.iter().cloned().zip(self.ratings.iter().copied()).collect()
    }
}

struct Indexed {
    ids: Vec<ConditionId>,
    index: HashMap<ConditionId, usize>,
}

impl Indexed {
    fn from_battles(battles: &[Battle]) -> Self {
        let set: BTreeSet<&ConditionId> = battles.iter().flat_map(|b| [&b.model_a, &b.model_b]).collect();
        let ids: Vec<ConditionId> = set.into_iter().cloned().collect();
        let index = ids.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Self { ids, index }
    }

    fn table(&self, battles: &[Battle]) -> Result<WinTable, RatingError> {
        let mut table = WinTable::new(self.ids.len());
        for b in battles {
            check_battle(b)?;
            table.add(self.index[&b.model_a], self.index[&b.model_b], b.outcome, b.weight);
        }
        Ok(table)
    }
}

fn check_battle(b: &Battle) -> Result<(), RatingError> {
    if b.model_a == b.model_b {
        return Err(RatingError::SelfBattle(b.model_a.clone()));
    }
    if !(b.weight > 0.0 && b.weight.is_finite()) {
        return Err(RatingError::InvalidWeight(b.weight));
    }
    Ok(())
}

/// Weighted Bradley-Terry maximum-likelihood ratings, anchored at `cfg.anchor_mean`.
pub fn fit_bradley_terry(battles: &[Battle], cfg: &EloConfig) -> Result<Ratings, RatingError> {
    cfg.validate()?;
    if battles.is_empty() {
        return Err(RatingError::NoBattles);
    }
    let idx = Indexed::from_battles(battles);
    let table = idx.table(battles)?;
    let fit = fit_table(&table, &idx.ids, cfg)?;
    Ok(Ratings {
        ratings: to_elo(&fit.theta, cfg),
        conditions: idx.ids,
        iterations: fit.iterations,
        log_likelihood: fit.log_likelihood,
    })
}

/// Wald intervals from the pseudo-inverse of the observed information.
pub fn wald_intervals(battles: &[Battle], cfg: &EloConfig) -> Result<BTreeMap<ConditionId, (f64, f64)>, RatingError> {
    cfg.validate()?;
    if battles.is_empty() {
        return Err(RatingError::NoBattles);
    }
    let idx = Indexed::from_battles(battles);
    let table = idx.table(battles)?;
    let fit = fit_table(&table, &idx.ids, cfg)?;
    let elo = to_elo(&fit.theta, cfg);
    let n = table.n;
    let (_, info) = derivatives(&table, &fit.theta);
    let centring = DMatrix::from_element(n, n, 1.0 / n as f64);
    let cov = (info + &centring)
        .try_inverse()
        .map(|inv| inv - centring)
        .ok_or(RatingError::NotConverged { iterations: fit.iterations, gradient_norm: f64::NAN })?;
    let slope = cfg.slope();
    Ok(idx
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let sd = cov[(i, i)].max(0.0).sqrt() / slope;
            (id.clone(), (elo[i] - Z_95 * sd, elo[i] + Z_95 * sd))
        })
        .collect())
}

/// Bootstrap distribution of the ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapRatings {
    pub full_sample: Ratings,
    pub replicates: ReplicateMatrix,
    /// `(mean, ci_low, ci_high)` per condition.
    pub summaries: Vec<(f64, f64, f64)>,
    pub redrawn_replicates: usize,
    pair_weights: Vec<f64>,
}

impl BootstrapRatings {
    pub fn conditions(&self) -> &[ConditionId] {
        &self.full_sample.conditions
    }

    pub fn summary(&self, id: &ConditionId) -> Option<(f64, f64, f64)> {
        self.conditions().iter().position(|c| c == id).map(|i| self.summaries[i])
    }

    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.pair_weights[i * self.conditions().len() + j]
    }
}

/// A resampling unit: the table cells it contributes to.
type Contribution = Vec<(usize, usize, BattleOutcome, f64)>;

fn resample_units(
    votes: &[ResolvedVote<'_>],
    battles: &[Battle],
    idx: &Indexed,
    unit: ResampleUnit,
) -> Vec<Contribution> {
    match unit {
        ResampleUnit::Battles => battles
            .iter()
            .map(|b| vec![(idx.index[&b.model_a], idx.index[&b.model_b], b.outcome, b.weight)])
            .collect(),
        ResampleUnit::Takers => {
            let mut per_taker: BTreeMap<&TakerId, Contribution> = BTreeMap::new();
            let mut bi = 0;
            for rv in votes {
                let n_battles = if rv.vote.response == Some(crate::model::Response::Tie) { 2 } else { 1 };
                let entry = per_taker.entry(&rv.vote.taker_id).or_default();
                for b in &battles[bi..bi + n_battles] {
                    entry.push((idx.index[&b.model_a], idx.index[&b.model_b], b.outcome, b.weight));
                }
                bi += n_battles;
            }
            per_taker.into_values().collect()
        }
    }
}

/// Identical units collapse into one category so a battle-level resample is
/// a single multinomial draw over the distinct kinds.
fn collapse_units(units: Vec<Contribution>) -> (Vec<Contribution>, Vec<f64>) {
    let mut kinds: Vec<Contribution> = Vec::new();
    let mut lookup: HashMap<Vec<(usize, usize, BattleOutcome, u64)>, usize> = HashMap::new();
    let mut counts: Vec<f64> = Vec::new();
    for unit in units {
        let key = unit.iter().map(|&(a, b, o, w)| (a, b, o, w.to_bits())).collect::<Vec<_>>();
        match lookup.get(&key) {
            Some(&k) => counts[k] += 1.0,
            None => {
                lookup.insert(key, kinds.len());
                kinds.push(unit);
                counts.push(1.0);
            }
        }
    }
    (kinds, counts)
}

/// Non-parametric bootstrap of the Elo ratings.
pub fn bootstrap_ratings(votes: &[ResolvedVote<'_>], cfg: &EloConfig) -> Result<BootstrapRatings, RatingError> {
    cfg.validate()?;
    let battles = expand_votes(votes)?;
    if battles.is_empty() {
        return Err(RatingError::NoBattles);
    }
    let idx = Indexed::from_battles(&battles);
    let table = idx.table(&battles)?;
    let full = fit_table(&table, &idx.ids, cfg)?;
    let full_sample = Ratings {
        ratings: to_elo(&full.theta, cfg),
        conditions: idx.ids.clone(),
        iterations: full.iterations,
        log_likelihood: full.log_likelihood,
    };

    let units = resample_units(votes, &battles, &idx, cfg.resample);
    let n_units = units.len() as u64;
    let (kinds, counts) = collapse_units(units);
    let total: f64 = counts.iter().sum();
    let probs: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let n = idx.ids.len();

    let results: Vec<(Vec<f64>, usize)> = (0..cfg.n_bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = stats::replicate_rng(cfg.rng_seed, r as u64);
            for redraws in 0..MAX_REDRAWS_PER_REPLICATE {
                let draw = stats::multinomial(&mut rng, n_units, &probs);
                let mut t = WinTable::new(n);
                for (kind, &k) in kinds.iter().zip(&draw) {
                    if k == 0 {
                        continue;
                    }
                    for &(a, b, o, w) in kind {
                        t.add(a, b, o, w * k as f64);
                    }
                }
                match fit_table(&t, &idx.ids, cfg) {
                    Ok(fit) => return Ok((to_elo(&fit.theta, cfg), redraws)),
                    Err(RatingError::Disconnected { .. } | RatingError::NonIdentifiable { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(RatingError::TooManyRedraws { replicate: r })
        })
        .collect::<Result<_, _>>()?;

    let redrawn_replicates = results.iter().filter(|(_, k)| *k > 0).count();
    let replicates = ReplicateMatrix {
        conditions: idx.ids.clone(),
        rows: results.into_iter().map(|(row, _)| row).collect(),
    };
    let summaries = (0..n)
        .map(|j| stats::percentile_summary(&replicates.column(j), 0.95))
        .collect();
    let pair_weights = (0..n * n).map(|k| table.pair_weight(k / n, k % n)).collect();
    Ok(BootstrapRatings {
        full_sample,
        replicates,
        summaries,
        redrawn_replicates,
        pair_weights,
    })
}

/// Paired bootstrap significance for every rating difference.
pub fn pairwise_significance(
    boot: &BootstrapRatings,
    alpha: f64,
) -> Result<Vec<crate::model::PairwiseEntry>, RatingError> {
    Ok(stats::pairwise_significance(&boot.replicates, alpha, |i, j| boot.pair_weight(i, j))?)
}

/// Full leaderboard: bootstrap ratings, intervals and FDR-adjusted pairwise tests.
pub fn leaderboard(votes: &[ResolvedVote<'_>], cfg: &EloConfig) -> Result<RatingReport, RatingError> {
    let boot = bootstrap_ratings(votes, cfg)?;
    let pairwise = if boot.conditions().len() >= 2 {
        pairwise_significance(&boot, cfg.alpha)?
    } else {
        Vec::new()
    };
    let wald = if cfg.wald {
        Some(wald_intervals(&expand_votes(votes)?, cfg)?)
    } else {
        None
    };
    let conditions = boot
        .conditions()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (mean, lo, hi) = boot.summaries[i];
            ConditionEstimate {
                condition: id.clone(),
                point_estimate: mean,
                ci_low: lo,
                ci_high: hi,
                full_sample: boot.full_sample.ratings[i],
                wald_ci: wald.as_ref().and_then(|w| w.get(id).copied()),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if boot.redrawn_replicates as f64 > REDRAW_WARN_FRACTION * cfg.n_bootstrap as f64 {
        warnings.push(format!(
            "{} of {} bootstrap replicates were redrawn because the resample was not identifiable",
            boot.redrawn_replicates, cfg.n_bootstrap
        ));
    }
    Ok(RatingReport {
        metric: ReportMetric::Elo,
        conditions,
        pairwise,
        alpha: cfg.alpha,
        n_votes_used: votes.len(),
        n_bootstrap: cfg.n_bootstrap,
        seed: cfg.rng_seed,
        resample_unit: cfg.resample,
        redrawn_replicates: boot.redrawn_replicates,
        warnings,
    })
}
