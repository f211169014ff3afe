use serde::{Deserialize, Serialize};

use super::{MetricsError, MotionSequence};

pub const DEFAULT_BEAT_SIGMA: f64 = 0.1;

/// Mean over audio beats of `exp(−d² / 2σ²)`, where `d` is the distance to
/// the nearest motion beat.
pub fn beat_alignment(motion_beats: &[f64], audio_beats: &[f64], sigma: f64) -> Result<f64, MetricsError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(MetricsError::NonPositive { name: "sigma", value: sigma });
    }
    if audio_beats.is_empty() {
        return Err(MetricsError::NoAudioBeats);
    }
    if motion_beats.iter().chain(audio_beats).any(|t| !t.is_finite()) {
        return Err(MetricsError::NonFinite("beat times"));
    }
    if motion_beats.is_empty() {
        return Ok(0.0);
    }
    let mut sorted = motion_beats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = audio_beats
        .iter()
        .map(|&ta| {
            let i = sorted.partition_point(|&tm| tm < ta);
            let mut best = f64::INFINITY;
            if i < sorted.len() {
                best = best.min((sorted[i] - ta).abs());
            }
            if i > 0 {
                best = best.min((ta - sorted[i - 1]).abs());
            }
            (-best * best / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(total / audio_beats.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeatDetection {
    /// Centred moving-average width in frames.
    pub smoothing_window: usize,
    /// Only minima with smoothed speed below this count as beats.
    pub threshold: f64,
}

impl Default for BeatDetection {
    fn default() -> Self {
        Self {
            smoothing_window: 5,
            threshold: f64::INFINITY,
        }
    }
}

/// Kinematic beats: local minima of smoothed mean joint speed. A beat at
/// speed sample `i` (between frames `i` and `i+1`) is timed at `(i + 0.5) / fps`.
pub fn detect_motion_beats(motion: &MotionSequence, cfg: &BeatDetection) -> Result<Vec<f64>, MetricsError> {
    motion.validate()?;
    if motion.n_frames() < 3 {
        return Ok(Vec::new());
    }
    let vel = motion.velocities();
    let joints = motion.joints();
    let speed: Vec<f64> = (0..vel.nrows())
        .map(|t| {
            joints
                .iter()
                .map(|chs| chs.iter().map(|&c| vel[(t, c)].powi(2)).sum::<f64>().sqrt())
                .sum::<f64>()
                / joints.len().max(1) as f64
        })
        .collect();

    let half = cfg.smoothing_window.max(1) / 2;
    let smooth: Vec<f64> = (0..speed.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(speed.len());
            speed[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();

    // Collapse runs equal within rounding noise, then keep runs lower than both neighbours.
    let scale = smooth.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let eps = scale * 1e-9;
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in smooth.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if (v - r.2).abs() <= eps => r.1 = i,
            _ => runs.push((i, i, v)),
        }
    }
    let mut beats = Vec::new();
    for k in 1..runs.len().saturating_sub(1) {
        let (start, end, v) = runs[k];
        if v < runs[k - 1].2 && v < runs[k + 1].2 && v < cfg.threshold {
            let centre = (start + end) as f64 / 2.0;
            beats.push((centre + 0.5) / motion.fps);
        }
    }
    Ok(beats)
}
