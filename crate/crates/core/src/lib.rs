//! Pairwise human-evaluation toolkit for speech-driven gesture generation.

pub mod model;
pub mod rating;
pub mod stats;
pub mod alignment;
pub mod study;
pub mod juice;
pub mod metrics;
pub mod simulate;
pub mod analysis;
