use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{study_rng, StudyError};
use crate::model::{Segment, SegmentId};

const MISMATCH_STREAM: u64 = 2;

/// For every segment, the segment whose speech plays over its motion in the
/// mismatched stimulus. A derangement within each speaker, so each segment is
/// heard exactly once as matched and once as mismatched audio.
///
/// When the mismatched speech is longer than the motion it is trimmed to the
/// motion's duration; when shorter it is padded with trailing silence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchAssignment {
    pub mapping: BTreeMap<SegmentId, SegmentId>,
}

impl MismatchAssignment {
    pub fn audio_for(&self, segment: &SegmentId) -> Option<&SegmentId> {
        self.mapping.get(segment)
    }

    /// Check the derangement and same-speaker properties against `segments`.
    pub fn validate(&self, segments: &[Segment]) -> Result<(), StudyError> {
        let speaker: BTreeMap<&SegmentId, &str> = segments.iter().map(|s| (&s.id, s.speaker_id.as_str())).collect();
        let bad = |msg: String| Err(StudyError::InvalidAssignment(msg));
        if self.mapping.len() != speaker.len() {
            return bad(format!("{} segments but {} assignments", speaker.len(), self.mapping.len()));
        }
        let mut sources = BTreeSet::new();
        for (seg, audio) in &self.mapping {
            let (Some(s1), Some(s2)) = (speaker.get(seg), speaker.get(audio)) else {
                return bad(format!("{seg} -> {audio} refers to an unknown segment"));
            };
            if seg == audio {
                return bad(format!("{seg} is assigned its own audio"));
            }
            if s1 != s2 {
                return bad(format!("{seg} -> {audio} crosses speakers"));
            }
            if !sources.insert(audio) {
                return bad(format!("{audio} is used as mismatched audio more than once"));
            }
        }
        Ok(())
    }
}

/// Uniformly random derangement of each speaker's segments.
pub fn build_mismatch_assignment(segments: &[Segment], seed: u64) -> Result<MismatchAssignment, StudyError> {
    let mut by_speaker: BTreeMap<&str, Vec<&SegmentId>> = BTreeMap::new();
    for s in segments {
        by_speaker.entry(&s.speaker_id).or_default().push(&s.id);
    }
    let mut rng = study_rng(seed, MISMATCH_STREAM);
    let mut mapping = BTreeMap::new();
    for (speaker, mut ids) in by_speaker {
        ids.sort();
        if ids.len() < 2 {
            return Err(StudyError::NoDerangement {
                speaker: speaker.to_owned(),
            });
        }
        // Rejection sampling: uniform over derangements, about e tries on average.
        let mut perm: Vec<usize> = (0..ids.len()).collect();
        loop {
            perm.shuffle(&mut rng);
            if perm.iter().enumerate().all(|(i, &p)| i != p) {
                break;
            }
        }
        for (i, &p) in perm.iter().enumerate() {
            mapping.insert(ids[i].clone(), ids[p].clone());
        }
    }
    Ok(MismatchAssignment { mapping })
}
