use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::frechet::{frechet_detail, GaussianSummary};
use super::{MetricsError, MotionSequence};

/// Maps a motion to a matrix of feature rows.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, motion: &MotionSequence) -> Result<DMatrix<f64>, MetricsError>;
}

/// Sliding windows summarised per channel by mean, standard deviation and
/// mean absolute frame-to-frame change. Rows are `[means | stds | deltas]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultExtractor {
    pub window: usize,
    pub stride: usize,
}

impl Default for DefaultExtractor {
    fn default() -> Self {
        Self { window: 30, stride: 15 }
    }
}

impl FeatureExtractor for DefaultExtractor {
    fn extract(&self, motion: &MotionSequence) -> Result<DMatrix<f64>, MetricsError> {
        if self.window == 0 || self.stride == 0 {
            return Err(MetricsError::NonPositive {
                name: "window/stride",
                value: 0.0,
            });
        }
        let t = motion.n_frames();
        if t < self.window {
            return Err(MetricsError::TooShort {
                frames: t,
                needed: self.window,
            });
        }
        let d = motion.n_channels();
        let n_rows = (t - self.window) / self.stride + 1;
        let w = self.window as f64;
        let mut out = DMatrix::zeros(n_rows, 3 * d);
        for r in 0..n_rows {
            let start = r * self.stride;
            let block = motion.frames.rows(start, self.window);
            for c in 0..d {
                let col = block.column(c);
                let mean = col.sum() / w;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w;
                let delta = if self.window > 1 {
                    (1..self.window).map(|i| (col[i] - col[i - 1]).abs()).sum::<f64>() / (w - 1.0)
                } else {
                    0.0
                };
                out[(r, c)] = mean;
                out[(r, d + c)] = var.sqrt();
                out[(r, 2 * d + c)] = delta;
            }
        }
        Ok(out)
    }
}

pub fn extract_features(motion: &MotionSequence, extractor: &dyn FeatureExtractor) -> Result<DMatrix<f64>, MetricsError> {
    motion.validate()?;
    extractor.extract(motion)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    /// Squared Fréchet distance.
    pub distance: f64,
    pub clipped: f64,
    pub reference_condition_number: f64,
    pub generated_condition_number: f64,
    pub reference_rows: usize,
    pub generated_rows: usize,
}

fn stack(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>, MetricsError> {
    let cols = blocks.first().map_or(0, DMatrix::ncols);
    if let Some(b) = blocks.iter().find(|b| b.ncols() != cols) {
        return Err(MetricsError::DimensionMismatch {
            expected: cols,
            got: b.ncols(),
        });
    }
    let rows: usize = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

fn compare(reference: DMatrix<f64>, generated: DMatrix<f64>) -> Result<FrechetReport, MetricsError> {
    if reference.ncols() != generated.ncols() {
        return Err(MetricsError::DimensionMismatch {
            expected: reference.ncols(),
            got: generated.ncols(),
        });
    }
    let a = GaussianSummary::fit(&reference, "reference")?;
    let b = GaussianSummary::fit(&generated, "generated")?;
    let detail = frechet_detail(&a, &b)?;
    Ok(FrechetReport {
        distance: detail.distance,
        clipped: detail.clipped,
        reference_condition_number: a.condition_number(),
        generated_condition_number: b.condition_number(),
        reference_rows: reference.nrows(),
        generated_rows: generated.nrows(),
    })
}

fn pooled(
    motions: &[MotionSequence],
    f: impl Fn(&MotionSequence) -> Result<DMatrix<f64>, MetricsError>,
) -> Result<DMatrix<f64>, MetricsError> {
    let blocks = motions
        .iter()
        .map(|m| {
            m.validate()?;
            f(m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    stack(&blocks)
}

/// Fréchet distance between pooled feature distributions. All samples of
/// every sequence on a side are pooled.
pub fn fgd(
    reference: &[MotionSequence],
    generated: &[MotionSequence],
    extractor: &dyn FeatureExtractor,
) -> Result<FrechetReport, MetricsError> {
    compare(
        pooled(reference, |m| extractor.extract(m))?,
        pooled(generated, |m| extractor.extract(m))?,
    )
}

/// Fréchet distance over raw per-frame poses.
pub fn fd_geometric(reference: &[MotionSequence], generated: &[MotionSequence]) -> Result<FrechetReport, MetricsError> {
    compare(
        pooled(reference, |m| Ok(m.frames.clone()))?,
        pooled(generated, |m| Ok(m.frames.clone()))?,
    )
}

/// Fréchet distance over per-frame velocities.
pub fn fd_kinetic(reference: &[MotionSequence], generated: &[MotionSequence]) -> Result<FrechetReport, MetricsError> {
    compare(
        pooled(reference, |m| Ok(m.velocities()))?,
        pooled(generated, |m| Ok(m.velocities()))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, d: usize) -> MotionSequence {
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|i| (0..d).map(|c| ((i * (c + 1)) as f64 * 0.37).sin() + c as f64).collect())
            .collect();
        MotionSequence::from_rows(&rows, 30.0).unwrap()
    }

    #[test]
    fn constant_motion_has_zero_spread() {
        let m = MotionSequence::from_rows(&vec![vec![1.0, -2.0]; 40], 30.0).unwrap();
        let f = extract_features(&m, &DefaultExtractor::default()).unwrap();
        for r in 0..f.nrows() {
            assert_eq!(f[(r, 0)], 1.0);
            for c in 2..6 {
                assert_eq!(f[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn full_window_gives_one_row() {
        let m = ramp(50, 3);
        let f = extract_features(&m, &DefaultExtractor { window: 50, stride: 50 }).unwrap();
        assert_eq!(f.shape(), (1, 9));
        assert!(matches!(
            extract_features(&m, &DefaultExtractor { window: 51, stride: 1 }),
            Err(MetricsError::TooShort { .. })
        ));
    }

    #[test]
    fn offset_shifts_means_only() {
        let m = ramp(60, 2);
        let mut shifted = m.clone();
        shifted.frames.add_scalar_mut(0.5);
        let ex = DefaultExtractor { window: 20, stride: 10 };
        let a = extract_features(&m, &ex).unwrap();
        let b = extract_features(&shifted, &ex).unwrap();
        for r in 0..a.nrows() {
            for c in 0..2 {
                assert!((b[(r, c)] - a[(r, c)] - 0.5).abs() < 1e-12);
            }
            for c in 2..6 {
                assert!((b[(r, c)] - a[(r, c)]).abs() < 1e-12);
            }
        }
    }
}
