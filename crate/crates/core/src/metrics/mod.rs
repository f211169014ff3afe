//! Automatic motion metrics: Fréchet distances over features, poses and
//! velocities, beat alignment, semantic gesture recall, diversity, and rank
//! correlation against human ratings.

mod beats;
mod diversity;
mod features;
mod frechet;
pub mod io;
mod kendall;
mod srgr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use beats::{beat_alignment, detect_motion_beats, BeatDetection, DEFAULT_BEAT_SIGMA};
pub use diversity::{div_pose, div_sample};
pub use features::{
    extract_features, fd_geometric, fd_kinetic, fgd, DefaultExtractor, FeatureExtractor, FrechetReport,
};
pub use frechet::{frechet_detail, frechet_distance, FrechetDetail, GaussianSummary};
pub use kendall::kendall_tau;
pub use srgr::{srgr, SemanticSpan, DEFAULT_SRGR_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{side} side has {rows} feature rows; at least 2 are needed")]
    TooFewRows { side: &'static str, rows: usize },
    #[error("sequence has {frames} frames; at least {needed} are needed")]
    TooShort { frames: usize, needed: usize },
    #[error("no audio beats; the score is undefined")]
    NoAudioBeats,
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("no semantic spans; the score is undefined")]
    NoSpans,
    #[error("spans cover no frames")]
    SpansCoverNoFrames,
    #[error("invalid span {index}: {message}")]
    InvalidSpan { index: usize, message: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} inputs, got {got}")]
    TooFewInputs { needed: usize, got: usize },
    #[error("input is constant; Kendall's tau-b is undefined")]
    AllTied,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A named joint and the channels holding its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelManifest {
    pub fps: f64,
    pub channels: Vec<String>,
    #[serde(default)]
    pub joints: Vec<Joint>,
    #[serde(default)]
    pub units: String,
}

/// `T × D` pose matrix sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: DMatrix<f64>,
    pub fps: f64,
    pub manifest: ChannelManifest,
}

impl MotionSequence {
    /// Build a sequence whose channels are unnamed and grouped as one joint per channel.
    pub fn from_rows(rows: &[Vec<f64>], fps: f64) -> Result<Self, MetricsError> {
        let d = rows.first().map_or(0, Vec::len);
        let manifest = ChannelManifest {
            fps,
            channels: (0..d).map(|i| format!("c{i}")).collect(),
            joints: (0..d)
                .map(|i| Joint {
                    name: format!("c{i}"),
                    channels: vec![i],
                })
                .collect(),
            units: String::new(),
        };
        Self::new(rows, manifest)
    }

    pub fn new(rows: &[Vec<f64>], manifest: ChannelManifest) -> Result<Self, MetricsError> {
        let d = manifest.channels.len();
        for r in rows {
            if r.len() != d {
                return Err(MetricsError::DimensionMismatch { expected: d, got: r.len() });
            }
        }
        let frames = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let m = MotionSequence {
            frames,
            fps: manifest.fps,
            manifest,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(MetricsError::NonPositive {
                name: "fps",
                value: self.fps,
            });
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite("motion frames"));
        }
        if self.frames.ncols() != self.manifest.channels.len() {
            return Err(MetricsError::DimensionMismatch {
                expected: self.manifest.channels.len(),
                got: self.frames.ncols(),
            });
        }
        for j in &self.manifest.joints {
            if let Some(&c) = j.channels.iter().find(|&&c| c >= self.frames.ncols()) {
                return Err(MetricsError::ShapeMismatch(format!(
                    "joint {} refers to channel {c} of {}",
                    j.name,
                    self.frames.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.frames.ncols()
    }

    /// Joint groups, defaulting to one joint per channel.
    pub fn joints(&self) -> Vec<Vec<usize>> {
        if self.manifest.joints.is_empty() {
            (0..self.n_channels()).map(|c| vec![c]).collect()
        } else {
            self.manifest.joints.iter().map(|j| j.channels.clone()).collect()
        }
    }

    /// Per-frame differences scaled to units per second, `(T-1) × D`.
    pub fn velocities(&self) -> DMatrix<f64> {
        let t = self.n_frames();
        if t < 2 {
            return DMatrix::zeros(0, self.n_channels());
        }
        DMatrix::from_fn(t - 1, self.n_channels(), |i, j| {
            (self.frames[(i + 1, j)] - self.frames[(i, j)]) * self.fps
        })
    }
}
