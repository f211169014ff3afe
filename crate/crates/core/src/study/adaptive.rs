use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{ConditionId, RatingReport};
use crate::rating::{predict_win_prob, EloConfig};

/// A pair stops receiving new tasks once its bootstrap interval on the
/// rating difference clears zero by `margin` Elo points and the pair has
/// collected at least `min_weight` expanded battle weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopRule {
    pub margin: f64,
    pub min_weight: f64,
}

impl Default for EarlyStopRule {
    fn default() -> Self {
        Self {
            margin: 100.0,
            min_weight: 150.0,
        }
    }
}

pub type Pair = (ConditionId, ConditionId);

fn key(a: &ConditionId, b: &ConditionId) -> Pair {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    #[serde(with = "pair_map")]
    pub pair_weights: BTreeMap<Pair, f64>,
    /// Estimated probability that the first condition of the pair wins.
    #[serde(with = "pair_map")]
    pub win_share: BTreeMap<Pair, f64>,
    pub stopped_pairs: BTreeSet<Pair>,
}

impl AdaptiveState {
    pub fn is_stopped(&self, a: &ConditionId, b: &ConditionId) -> bool {
        self.stopped_pairs.contains(&key(a, b))
    }

    pub fn weight(&self, a: &ConditionId, b: &ConditionId) -> f64 {
        self.pair_weights.get(&key(a, b)).copied().unwrap_or(0.0)
    }
}

/// Fold a fresh leaderboard into the stopping state. Stopped pairs stay stopped.
pub fn update_adaptive_state(state: &AdaptiveState, report: &RatingReport, rule: &EarlyStopRule) -> AdaptiveState {
    let mut next = state.clone();
    let elo = EloConfig::default();
    for entry in &report.pairwise {
        let k = key(&entry.a, &entry.b);
        let w = next.pair_weights.entry(k.clone()).or_insert(0.0);
        *w = w.max(entry.weight);
        let (ra, rb) = match (report.estimate(&k.0), report.estimate(&k.1)) {
            (Some(a), Some(b)) => (a.point_estimate, b.point_estimate),
            _ => continue,
        };
        next.win_share.insert(k.clone(), predict_win_prob(ra, rb, &elo));
        let separated = entry.diff_ci_low >= rule.margin || entry.diff_ci_high <= -rule.margin;
        if separated && entry.weight >= rule.min_weight {
            next.stopped_pairs.insert(k);
        }
    }
    next
}

mod pair_map {
    use super::Pair;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Item {
        a: crate::model::ConditionId,
        b: crate::model::ConditionId,
        value: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<Pair, f64>, s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<Item> = map
            .iter()
            .map(|((a, b), v)| Item {
                a: a.clone(),
                b: b.clone(),
                value: *v,
            })
            .collect();
        items.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Pair, f64>, D::Error> {
        Ok(Vec::<Item>::deserialize(d)?
            .into_iter()
            .map(|i| ((i.a, i.b), i.value))
            .collect())
    }
}
