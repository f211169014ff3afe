use serde::{Deserialize, Serialize};

use super::{MetricsError, MotionSequence};

pub const DEFAULT_SRGR_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub weight: f64,
}

/// Share of joints within `joint_threshold` of the reference, averaged over
/// the frames of each span and then across spans by weight.
pub fn srgr(
    reference: &MotionSequence,
    generated: &MotionSequence,
    spans: &[SemanticSpan],
    joint_threshold: f64,
) -> Result<f64, MetricsError> {
    reference.validate()?;
    generated.validate()?;
    if reference.frames.shape() != generated.frames.shape() {
        return Err(MetricsError::ShapeMismatch(format!(
            "reference {:?} vs generated {:?}",
            reference.frames.shape(),
            generated.frames.shape()
        )));
    }
    if reference.manifest.channels != generated.manifest.channels || reference.joints() != generated.joints() {
        return Err(MetricsError::ShapeMismatch("channel manifests differ".into()));
    }
    if spans.is_empty() {
        return Err(MetricsError::NoSpans);
    }
    if !(joint_threshold > 0.0) {
        return Err(MetricsError::NonPositive {
            name: "joint_threshold",
            value: joint_threshold,
        });
    }
    let duration = reference.n_frames() as f64 / reference.fps;
    for (index, s) in spans.iter().enumerate() {
        let problem = if !(s.start_s < s.end_s) {
            Some("start must precede end")
        } else if !(s.weight > 0.0) {
            Some("weight must be positive")
        } else if s.start_s < 0.0 || s.end_s > duration + 1e-9 {
            Some("span lies outside the sequence")
        } else {
            None
        };
        if let Some(message) = problem {
            return Err(MetricsError::InvalidSpan {
                index,
                message: message.into(),
            });
        }
    }

    let joints = reference.joints();
    let recall_at = |t: usize| -> f64 {
        let hits = joints
            .iter()
            .filter(|chs| {
                let err = chs
                    .iter()
                    .map(|&c| (reference.frames[(t, c)] - generated.frames[(t, c)]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                err < joint_threshold
            })
            .count();
        hits as f64 / joints.len() as f64
    };

    let (mut num, mut den) = (0.0, 0.0);
    for s in spans {
        let frames: Vec<usize> = (0..reference.n_frames())
            .filter(|&t| {
                let time = t as f64 / reference.fps;
                time >= s.start_s && time < s.end_s
            })
            .collect();
        if frames.is_empty() {
            continue;
        }
        let mean = frames.iter().map(|&t| recall_at(t)).sum::<f64>() / frames.len() as f64;
        num += s.weight * mean;
        den += s.weight;
    }
    if den == 0.0 {
        return Err(MetricsError::SpansCoverNoFrames);
    }
    Ok(num / den)
}
