use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSummary {
    /// Sample mean and unbiased covariance of the rows of `x` (`N × F`).
    pub fn fit(x: &DMatrix<f64>, side: &'static str) -> Result<Self, MetricsError> {
        let n = x.nrows();
        if n < 2 {
            return Err(MetricsError::TooFewRows { side, rows: n });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(side));
        }
        let mean = x.row_mean().transpose();
        let mut centred = x.clone();
        for mut row in centred.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centred.transpose() * &centred / (n - 1) as f64;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self, name: &'static str) -> Result<(), MetricsError> {
        let f = self.dim();
        if self.cov.nrows() != f || self.cov.ncols() != f {
            return Err(MetricsError::DimensionMismatch {
                expected: f,
                got: self.cov.nrows(),
            });
        }
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(name));
        }
        Ok(())
    }

    /// Ratio of the largest to the smallest covariance eigenvalue.
    pub fn condition_number(&self) -> f64 {
        let eig = SymmetricEigen::new(symmetrize(&self.cov)).eigenvalues;
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetDetail {
    /// Squared Fréchet distance.
    pub distance: f64,
    /// Total magnitude of negative eigenvalues clipped to zero.
    pub clipped: f64,
}

/// PSD square root via eigendecomposition; returns the root and the clipped mass.
fn sqrt_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut clipped = 0.0;
    let roots = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            clipped += -l;
            0.0
        } else {
            l.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&roots) * v.transpose(), clipped)
}

/// Squared Fréchet distance between two Gaussians:
/// `|μa − μb|² + Tr(Σa + Σb − 2 (Σa Σb)^½)`.
pub fn frechet_detail(a: &GaussianSummary, b: &GaussianSummary) -> Result<FrechetDetail, MetricsError> {
    a.validate("first summary")?;
    b.validate("second summary")?;
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    // Tr (Σa Σb)^½ = Tr (Σa^½ Σb Σa^½)^½, and the inner matrix is symmetric PSD.
    let (root_a, clip_a) = sqrt_psd(&a.cov);
    let inner = symmetrize(&(&root_a * &b.cov * &root_a));
    let eig = SymmetricEigen::new(inner).eigenvalues;
    let mut clip_inner = 0.0;
    let tr_cross: f64 = eig
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clip_inner += -l;
                0.0
            } else {
                l.sqrt()
            }
        })
        .sum();
    let dmu = (&a.mean - &b.mean).norm_squared();
    let d2 = dmu + a.cov.trace() + b.cov.trace() - 2.0 * tr_cross;
    Ok(FrechetDetail {
        distance: d2.max(0.0),
        clipped: clip_a + clip_inner,
    })
}

pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, MetricsError> {
    Ok(frechet_detail(a, b)?.distance)
}
