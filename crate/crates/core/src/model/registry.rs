use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Condition, ConditionId, ConditionKind, Segment, SegmentId, Stimulus, ValidationError};

/// Conditions, segments and stimuli known to a study.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub conditions: Vec<Condition>,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub stimuli: Vec<Stimulus>,
}

impl Registry {
    pub fn condition(&self, id: &ConditionId) -> Option<&Condition> {
        self.conditions.iter().find(|c| &c.id == id)
    }

    pub fn segment(&self, id: &SegmentId) -> Option<&Segment> {
        self.segments.iter().find(|s| &s.id == id)
    }

    /// Stimuli rendering `condition` on `segment` with the given audio.
    pub fn stimuli_for<'a, 'b>(
        &'a self,
        condition: &'b ConditionId,
        segment: &'b SegmentId,
        audio: &'b SegmentId,
    ) -> impl Iterator<Item = &'a Stimulus> + 'b
    where
        'a: 'b,
    {
        self.stimuli.iter().filter(move |s| {
            &s.condition_id == condition && &s.segment_id == segment && &s.audio_segment_id == audio
        })
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut seen = HashSet::new();
        let mut mocap = 0;
        for (i, c) in self.conditions.iter().enumerate() {
            c.validate().map_err(|e| e.within(format!("conditions[{i}]")))?;
            if !seen.insert(c.id.as_str()) {
                return Err(ValidationError::new(format!("conditions[{i}].id"), "duplicate id"));
            }
            if c.kind == ConditionKind::Mocap {
                mocap += 1;
            }
        }
        if mocap > 1 {
            return Err(ValidationError::new("conditions", "at most one mocap condition per study"));
        }

        let mut segments: HashMap<&str, &Segment> = HashMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            s.validate().map_err(|e| e.within(format!("segments[{i}]")))?;
            if segments.insert(s.id.as_str(), s).is_some() {
                return Err(ValidationError::new(format!("segments[{i}].id"), "duplicate id"));
            }
        }

        let mut stim_ids = HashSet::new();
        for (i, st) in self.stimuli.iter().enumerate() {
            let path = format!("stimuli[{i}]");
            if !stim_ids.insert(st.id.as_str()) {
                return Err(ValidationError::new(format!("{path}.id"), "duplicate id"));
            }
            let cond = self
                .condition(&st.condition_id)
                .ok_or_else(|| ValidationError::new(format!("{path}.condition_id"), "unknown condition"))?;
            if st.seed_index >= cond.seeds_available {
                return Err(ValidationError::new(
                    format!("{path}.seed_index"),
                    format!("condition has {} seeds", cond.seeds_available),
                ));
            }
            let seg = segments
                .get(st.segment_id.as_str())
                .ok_or_else(|| ValidationError::new(format!("{path}.segment_id"), "unknown segment"))?;
            let audio = segments
                .get(st.audio_segment_id.as_str())
                .ok_or_else(|| ValidationError::new(format!("{path}.audio_segment_id"), "unknown segment"))?;
            if seg.speaker_id != audio.speaker_id {
                return Err(ValidationError::new(
                    format!("{path}.audio_segment_id"),
                    "mismatched audio must come from the same speaker",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn seg(id: &str, speaker: &str) -> Segment {
        Segment {
            id: id.into(),
            speaker_id: speaker.into(),
            take_id: None,
            start_s: 0.0,
            end_s: 9.0,
            transcript: "Hello there.".into(),
            complete_sentences: None,
            artifact_flags: BTreeSet::new(),
        }
    }

    fn cond(id: &str, kind: ConditionKind) -> Condition {
        Condition {
            id: id.into(),
            display_name: id.to_uppercase(),
            kind,
            seeds_available: 1,
        }
    }

    #[test]
    fn two_mocap_conditions_rejected() {
        let reg = Registry {
            conditions: vec![cond("m1", ConditionKind::Mocap), cond("m2", ConditionKind::Mocap)],
            segments: vec![],
            stimuli: vec![],
        };
        assert!(reg.validate().is_err());
    }

    #[test]
    fn cross_speaker_audio_rejected() {
        let reg = Registry {
            conditions: vec![cond("a", ConditionKind::Generative)],
            segments: vec![seg("s1", "wayne"), seg("s2", "scott")],
            stimuli: vec![Stimulus {
                id: "x".into(),
                condition_id: "a".into(),
                segment_id: "s1".into(),
                seed_index: 0,
                video_uri: "x.mp4".into(),
                audio_segment_id: "s2".into(),
                muted: false,
            }],
        };
        let err = reg.validate().unwrap_err();
        assert_eq!(err.path, "stimuli[0].audio_segment_id");
    }

    #[test]
    fn dangling_condition_rejected() {
        let reg = Registry {
            conditions: vec![],
            segments: vec![seg("s1", "wayne")],
            stimuli: vec![Stimulus {
                id: "x".into(),
                condition_id: "ghost".into(),
                segment_id: "s1".into(),
                seed_index: 0,
                video_uri: "x.mp4".into(),
                audio_segment_id: "s1".into(),
                muted: true,
            }],
        };
        assert_eq!(reg.validate().unwrap_err().path, "stimuli[0].condition_id");
    }
}
