use super::{MetricsError, MotionSequence};

/// Mean distance of each pose from the time-averaged pose.
pub fn div_pose(motion: &MotionSequence) -> Result<f64, MetricsError> {
    motion.validate()?;
    let t = motion.n_frames();
    if t == 0 {
        return Err(MetricsError::TooShort { frames: 0, needed: 1 });
    }
    let mean = motion.frames.row_mean();
    let total: f64 = motion.frames.row_iter().map(|r| (r - &mean).norm()).sum();
    Ok(total / t as f64)
}

/// Mean over sample pairs of the frame-averaged pose distance.
pub fn div_sample(samples: &[MotionSequence]) -> Result<f64, MetricsError> {
    if samples.len() < 2 {
        return Err(MetricsError::TooFewInputs {
            needed: 2,
            got: samples.len(),
        });
    }
    let shape = samples[0].frames.shape();
    for s in samples {
        s.validate()?;
        if s.frames.shape() != shape {
            return Err(MetricsError::ShapeMismatch(format!("{:?} vs {:?}", s.frames.shape(), shape)));
        }
    }
    if shape.0 == 0 {
        return Err(MetricsError::TooShort { frames: 0, needed: 1 });
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let diff = &samples[i].frames - &samples[j].frames;
            sum += diff.row_iter().map(|r| r.norm()).sum::<f64>() / shape.0 as f64;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_pose_has_no_diversity() {
        let m = MotionSequence::from_rows(&vec![vec![1.0, 2.0]; 10], 30.0).unwrap();
        assert_eq!(div_pose(&m).unwrap(), 0.0);
        assert_eq!(div_sample(&[m.clone(), m]).unwrap(), 0.0);
    }

    #[test]
    fn single_frame_pair_at_distance_three() {
        let a = MotionSequence::from_rows(&[vec![0.0, 0.0]], 30.0).unwrap();
        let b = MotionSequence::from_rows(&[vec![3.0, 0.0]], 30.0).unwrap();
        assert_eq!(div_sample(&[a, b]).unwrap(), 3.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = MotionSequence::from_rows(&[vec![0.0, 0.0]], 30.0).unwrap();
        let b = MotionSequence::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], 30.0).unwrap();
        assert!(matches!(div_sample(&[a, b]), Err(MetricsError::ShapeMismatch(_))));
    }
}
