use rand::seq::IndexedRandom;
use rand::Rng;

use super::{stable_hash, study_rng, AdaptiveState, MismatchAssignment, StudyError};
use crate::model::{
    ComparisonTask, Condition, ConditionId, Registry, Segment, SegmentId, Stimulus, StudyKind, TaskId,
};

const REALISM_STREAM: u64 = 3;
const ALIGNMENT_STREAM: u64 = 4;

fn pick<'a>(
    registry: &'a Registry,
    rng: &mut impl Rng,
    condition: &ConditionId,
    segment: &SegmentId,
    audio: &SegmentId,
    muted: bool,
) -> Result<&'a Stimulus, StudyError> {
    let mut options: Vec<&Stimulus> = registry
        .stimuli_for(condition, segment, audio)
        .filter(|s| s.muted == muted)
        .collect();
    options.sort_by(|a, b| a.seed_index.cmp(&b.seed_index).then_with(|| a.id.cmp(&b.id)));
    options.choose(rng).copied().ok_or_else(|| StudyError::MissingStimulus {
        condition: condition.clone(),
        segment: segment.clone(),
        audio: audio.clone(),
    })
}

fn orient(rng: &mut impl Rng, first: Stimulus, second: Stimulus) -> (Stimulus, Stimulus) {
    if rng.random_bool(0.5) {
        (first, second)
    } else {
        (second, first)
    }
}

/// Every active condition pair on every segment, each with a randomly chosen
/// generation seed per side and random left/right placement.
pub fn generate_realism_tasks(
    registry: &Registry,
    conditions: &[ConditionId],
    segments: &[SegmentId],
    adaptive: &AdaptiveState,
    seed: u64,
) -> Result<Vec<ComparisonTask>, StudyError> {
    let pairs: Vec<(&ConditionId, &ConditionId)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(i, a)| conditions[i + 1..].iter().map(move |b| (a, b)))
        .filter(|(a, b)| !adaptive.is_stopped(a, b))
        .collect();
    if pairs.is_empty() {
        let active = if conditions.len() >= 2 { 0 } else { conditions.len() };
        return Err(StudyError::TooFewConditions(active));
    }
    let mut rng = study_rng(seed, REALISM_STREAM);
    let mut tasks = Vec::with_capacity(pairs.len() * segments.len());
    for (a, b) in pairs {
        for seg in segments {
            let sa = pick(registry, &mut rng, a, seg, seg, true)?.clone();
            let sb = pick(registry, &mut rng, b, seg, seg, true)?.clone();
            let (left, right) = orient(&mut rng, sa, sb);
            tasks.push(ComparisonTask {
                id: TaskId::new(format!("r:{a}:{b}:{seg}")),
                study_kind: StudyKind::Realism,
                left,
                right,
                attention_check: None,
            });
        }
    }
    Ok(tasks)
}

/// One task per segment: the condition's motion with its own speech against
/// the same motion with the assigned mismatched speech.
pub fn generate_alignment_tasks(
    registry: &Registry,
    condition: &ConditionId,
    segments: &[SegmentId],
    assignment: &MismatchAssignment,
    seed: u64,
) -> Result<Vec<ComparisonTask>, StudyError> {
    // Each condition draws from its own stream so pools do not depend on condition order.
    let mut rng = study_rng(seed, ALIGNMENT_STREAM ^ (stable_hash(condition.as_str()) << 8));
    let mut tasks = Vec::with_capacity(segments.len());
    for seg in segments {
        let audio = assignment
            .audio_for(seg)
            .ok_or_else(|| StudyError::InvalidAssignment(format!("segment {seg} has no mismatched audio")))?;
        let matched = pick(registry, &mut rng, condition, seg, seg, false)?.clone();
        let mismatched = registry
            .stimuli_for(condition, seg, audio)
            .find(|s| !s.muted && s.seed_index == matched.seed_index)
            .cloned()
            .ok_or_else(|| StudyError::MissingStimulus {
                condition: condition.clone(),
                segment: seg.clone(),
                audio: audio.clone(),
            })?;
        let (left, right) = orient(&mut rng, matched, mismatched);
        tasks.push(ComparisonTask {
            id: TaskId::new(format!("a:{condition}:{seg}")),
            study_kind: StudyKind::Alignment,
            left,
            right,
            attention_check: None,
        });
    }
    Ok(tasks)
}

/// Stimulus records for every condition, segment and generation seed.
/// Realism studies get muted videos; alignment studies get a matched and a
/// mismatched audible video per motion. Video locators are opaque counters
/// under `uri_prefix` so they reveal nothing about the condition.
pub fn synthesize_stimuli(
    conditions: &[Condition],
    segments: &[Segment],
    kind: StudyKind,
    assignment: Option<&MismatchAssignment>,
    uri_prefix: &str,
) -> Result<Vec<Stimulus>, StudyError> {
    let mut out = Vec::new();
    let mut counter = 0usize;
    let mut push = |cond: &Condition, seg: &Segment, seed_index: u32, audio: &SegmentId, muted: bool| {
        counter += 1;
        out.push(Stimulus {
            id: format!("{}|{}|{}|{}{}", cond.id, seg.id, seed_index, audio, if muted { "|muted" } else { "" }).into(),
            condition_id: cond.id.clone(),
            segment_id: seg.id.clone(),
            seed_index,
            video_uri: format!("{uri_prefix}/{counter:06}.mp4"),
            audio_segment_id: audio.clone(),
            muted,
        });
    };
    for cond in conditions {
        for seg in segments {
            for seed_index in 0..cond.seeds_available {
                match kind {
                    StudyKind::Realism => push(cond, seg, seed_index, &seg.id, true),
                    StudyKind::Alignment => {
                        let audio = assignment
                            .and_then(|a| a.audio_for(&seg.id))
                            .ok_or_else(|| {
                                StudyError::InvalidAssignment(format!("segment {} has no mismatched audio", seg.id))
                            })?;
                        push(cond, seg, seed_index, &seg.id, false);
                        push(cond, seg, seed_index, audio, false);
                    }
                }
            }
        }
    }
    Ok(out)
}
