use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{study_rng, StudyError};
use crate::model::{ArtifactFlag, Segment};

const SEGMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentPolicy {
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub default_quota: usize,
    /// Overrides for specific speakers.
    pub per_speaker_quota: BTreeMap<String, usize>,
    pub require_complete_sentences: bool,
}

impl Default for SegmentPolicy {
    fn default() -> Self {
        Self {
            min_duration_s: 7.0,
            max_duration_s: 12.0,
            default_quota: 4,
            per_speaker_quota: BTreeMap::new(),
            require_complete_sentences: true,
        }
    }
}

impl SegmentPolicy {
    pub fn quota(&self, speaker: &str) -> usize {
        self.per_speaker_quota.get(speaker).copied().unwrap_or(self.default_quota)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if !(self.min_duration_s < self.max_duration_s) {
            return Err(StudyError::InvalidConfig(format!(
                "min_duration_s {} must be below max_duration_s {}",
                self.min_duration_s, self.max_duration_s
            )));
        }
        if self.default_quota == 0 || self.per_speaker_quota.values().any(|&q| q == 0) {
            return Err(StudyError::InvalidConfig("quotas must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Flicking,
    MeshPenetration,
    TooShort,
    TooLong,
    IncompleteSentence,
    Invalid,
}

/// Why a candidate cannot be used, or `None` when it is eligible.
pub fn screen_segment(segment: &Segment, policy: &SegmentPolicy) -> Option<Rejection> {
    let flags = &segment.artifact_flags;
    if segment.validate().is_err() {
        return Some(Rejection::Invalid);
    }
    if flags.contains(&ArtifactFlag::Flicking) {
        return Some(Rejection::Flicking);
    }
    let excused = flags.contains(&ArtifactFlag::AcceptablePenetrationA)
        || flags.contains(&ArtifactFlag::AcceptablePenetrationB);
    if flags.contains(&ArtifactFlag::MeshPenetration) && !excused {
        return Some(Rejection::MeshPenetration);
    }
    let d = segment.duration_s();
    if d < policy.min_duration_s {
        return Some(Rejection::TooShort);
    }
    if d > policy.max_duration_s {
        return Some(Rejection::TooLong);
    }
    if policy.require_complete_sentences && !segment.is_sentence_complete() {
        return Some(Rejection::IncompleteSentence);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub speaker: String,
    pub quota: usize,
    pub selected: usize,
}

/// Draw up to the quota of eligible, mutually disjoint segments per speaker.
/// Output is ordered by speaker, then start time.
pub fn select_segments(candidates: &[Segment], policy: &SegmentPolicy, seed: u64) -> Result<Vec<Segment>, StudyError> {
    policy.validate()?;
    let mut by_speaker: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
    for s in candidates {
        by_speaker.entry(s.speaker_id.as_str()).or_default();
        if screen_segment(s, policy).is_none() {
            by_speaker.get_mut(s.speaker_id.as_str()).unwrap().push(s);
        }
    }

    let mut rng = study_rng(seed, SEGMENT_STREAM);
    let mut selected = Vec::new();
    let mut shortfalls = Vec::new();
    for (speaker, mut pool) in by_speaker {
        // Canonical order first so the draw does not depend on input order.
        pool.sort_by(|a, b| a.id.cmp(&b.id));
        pool.shuffle(&mut rng);
        let quota = policy.quota(speaker);
        let mut picked: Vec<&Segment> = Vec::with_capacity(quota);
        for cand in pool {
            if picked.len() == quota {
                break;
            }
            if picked.iter().all(|p| !p.overlaps(cand)) {
                picked.push(cand);
            }
        }
        if picked.len() < quota {
            shortfalls.push(Shortfall {
                speaker: speaker.to_owned(),
                quota,
                selected: picked.len(),
            });
        }
        picked.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then_with(|| a.id.cmp(&b.id)));
        selected.extend(picked.into_iter().cloned());
    }
    if shortfalls.is_empty() {
        Ok(selected)
    } else {
        Err(StudyError::Shortfall {
            shortfalls,
            partial: selected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn seg(id: &str, speaker: &str, start: f64, end: f64) -> Segment {
        Segment {
            id: id.into(),
            speaker_id: speaker.into(),
            take_id: None,
            start_s: start,
            end_s: end,
            transcript: "We went to the harbour at dawn.".into(),
            complete_sentences: None,
            artifact_flags: BTreeSet::new(),
        }
    }

    #[test]
    fn duration_bounds() {
        let p = SegmentPolicy::default();
        assert_eq!(screen_segment(&seg("a", "x", 0.0, 6.9), &p), Some(Rejection::TooShort));
        assert_eq!(screen_segment(&seg("a", "x", 0.0, 7.0), &p), None);
        assert_eq!(screen_segment(&seg("a", "x", 0.0, 12.0), &p), None);
        assert_eq!(screen_segment(&seg("a", "x", 0.0, 12.1), &p), Some(Rejection::TooLong));
    }

    #[test]
    fn artifact_rules() {
        let p = SegmentPolicy::default();
        let mut s = seg("a", "x", 0.0, 9.0);
        s.artifact_flags.insert(ArtifactFlag::Flicking);
        s.artifact_flags.insert(ArtifactFlag::AcceptablePenetrationA);
        assert_eq!(screen_segment(&s, &p), Some(Rejection::Flicking));

        let mut s = seg("a", "x", 0.0, 9.0);
        s.artifact_flags.insert(ArtifactFlag::MeshPenetration);
        assert_eq!(screen_segment(&s, &p), Some(Rejection::MeshPenetration));
        s.artifact_flags.insert(ArtifactFlag::AcceptablePenetrationB);
        assert_eq!(screen_segment(&s, &p), None);
    }

    #[test]
    fn incomplete_sentence_rejected_unless_policy_allows() {
        let mut s = seg("a", "x", 0.0, 9.0);
        s.transcript = "and then we".into();
        assert_eq!(screen_segment(&s, &SegmentPolicy::default()), Some(Rejection::IncompleteSentence));
        let lax = SegmentPolicy {
            require_complete_sentences: false,
            ..SegmentPolicy::default()
        };
        assert_eq!(screen_segment(&s, &lax), None);
    }

    #[test]
    fn quota_and_determinism() {
        let candidates: Vec<Segment> = (0..12)
            .map(|i| seg(&format!("s{i:02}"), "x", i as f64 * 20.0, i as f64 * 20.0 + 9.0))
            .collect();
        let p = SegmentPolicy::default();
        let a = select_segments(&candidates, &p, 5).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, select_segments(&candidates, &p, 5).unwrap());
        let mut reversed = candidates.clone();
        reversed.reverse();
        assert_eq!(a, select_segments(&reversed, &p, 5).unwrap());
    }

    #[test]
    fn overlapping_candidates_not_both_picked() {
        let candidates = vec![
            seg("a", "x", 0.0, 9.0),
            seg("b", "x", 5.0, 14.0),
            seg("c", "x", 10.0, 19.0),
        ];
        let p = SegmentPolicy {
            default_quota: 2,
            ..SegmentPolicy::default()
        };
        let mut met = 0;
        for seed in 0..40 {
            match select_segments(&candidates, &p, seed) {
                Ok(out) => {
                    assert!(!out[0].overlaps(&out[1]));
                    met += 1;
                }
                // Drawing the middle segment first blocks both others.
                Err(StudyError::Shortfall { partial, .. }) => assert_eq!(partial.len(), 1),
                Err(e) => panic!("{e}"),
            }
        }
        assert!(met > 0);
    }

    #[test]
    fn shortfall_is_explicit() {
        let mut candidates = vec![seg("a", "x", 0.0, 9.0), seg("b", "x", 20.0, 29.0)];
        candidates.push(seg("c", "y", 0.0, 9.0));
        let mut p = SegmentPolicy::default();
        p.per_speaker_quota.insert("y".into(), 1);
        match select_segments(&candidates, &p, 0) {
            Err(StudyError::Shortfall { shortfalls, partial }) => {
                assert_eq!(
                    shortfalls,
                    vec![Shortfall {
                        speaker: "x".into(),
                        quota: 4,
                        selected: 2
                    }]
                );
                assert_eq!(partial.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
