//! Resampling helpers shared by the Elo and appropriateness analyses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::model::{ConditionId, PairwiseEntry};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("pairwise testing needs at least 2 conditions, got {0}")]
    TooFewConditions(usize),
    #[error("replicate matrix is empty")]
    NoReplicates,
    #[error("replicate {row} has {got} values, expected {expected}")]
    RaggedReplicates { row: usize, got: usize, expected: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Bootstrap replicates: one row per replicate, one column per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMatrix {
    pub conditions: Vec<ConditionId>,
    pub rows: Vec<Vec<f64>>,
}

impl ReplicateMatrix {
    pub fn n_replicates(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.rows.is_empty() {
            return Err(StatsError::NoReplicates);
        }
        let n = self.conditions.len();
        for (row, r) in self.rows.iter().enumerate() {
            if r.len() != n {
                return Err(StatsError::RaggedReplicates {
                    row,
                    got: r.len(),
                    expected: n,
                });
            }
        }
        Ok(())
    }

    /// CSV with a `replicate` column followed by one column per condition.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate");
        for c in &self.conditions {
            out.push(',');
            out.push_str(&csv_field(c.as_str()));
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Per-replicate RNG. Replicates are independent streams of one seed, so
/// serial and parallel evaluation draw identical numbers.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean and central `level` percentile interval.
pub fn percentile_summary(values: &[f64], level: f64) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&sorted, tail);
    let hi = quantile_sorted(&sorted, 1.0 - tail);
    if lo == hi {
        // all replicates equal; avoid ulp drift in the summed mean
        return (lo, lo, hi);
    }
    (mean, lo, hi)
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn benjamini_hochberg(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = p_values[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

/// Two-sided bootstrap p-value for "difference is zero", floored at 1/n.
pub fn bootstrap_p_value(diffs: &[f64]) -> f64 {
    let n = diffs.len() as f64;
    let le = diffs.iter().filter(|&&d| d <= 0.0).count() as f64 / n;
    let ge = diffs.iter().filter(|&&d| d >= 0.0).count() as f64 / n;
    (2.0 * le.min(ge)).clamp(1.0 / n, 1.0)
}

/// Paired bootstrap tests over all condition pairs with BH adjustment.
/// `pair_weight(i, j)` reports the observed vote weight between two columns.
pub fn pairwise_significance(
    replicates: &ReplicateMatrix,
    alpha: f64,
    pair_weight: impl Fn(usize, usize) -> f64,
) -> Result<Vec<PairwiseEntry>, StatsError> {
    let n = replicates.conditions.len();
    if n < 2 {
        return Err(StatsError::TooFewConditions(n));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    replicates.check()?;

    let mut entries = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let diffs: Vec<f64> = replicates.rows.iter().map(|r| r[i] - r[j]).collect();
            let (diff, lo, hi) = percentile_summary(&diffs, 0.95);
            entries.push(PairwiseEntry {
                a: replicates.conditions[i].clone(),
                b: replicates.conditions[j].clone(),
                diff,
                diff_ci_low: lo,
                diff_ci_high: hi,
                weight: pair_weight(i, j),
                p_raw: bootstrap_p_value(&diffs),
                p_fdr: 0.0,
                significant: false,
            });
        }
    }
    let raw: Vec<f64> = entries.iter().map(|e| e.p_raw).collect();
    for (e, adj) in entries.iter_mut().zip(benjamini_hochberg(&raw)) {
        e.p_fdr = adj.max(e.p_raw);
        e.significant = e.p_fdr <= alpha;
    }
    Ok(entries)
}

/// Counts of `n` draws over categories with the given probabilities,
/// sampled as a chain of conditional binomials.
pub fn multinomial<R: rand::Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining_n;
            break;
        }
        let share = if remaining_p > 0.0 { (p / remaining_p).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining_n, share)
            .expect("binomial share within [0, 1]")
            .sample(rng);
        counts[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    counts
}
