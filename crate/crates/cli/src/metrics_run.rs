//! `metrics run`: every requested metric for every system in a JSON config.
//! Paths in the config are relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gesteval::metrics::io::{parse_onsets, parse_spans, read_motion};
use gesteval::metrics::{
    beat_alignment, detect_motion_beats, div_pose, div_sample, fd_geometric, fd_kinetic, fgd, srgr, BeatDetection,
    DefaultExtractor, MotionSequence, DEFAULT_BEAT_SIGMA, DEFAULT_SRGR_THRESHOLD,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fgd,
    FdGeometric,
    FdKinetic,
    BeatAlignment,
    Srgr,
    DivPose,
    DivSample,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Fgd => "fgd",
            Metric::FdGeometric => "fd_geometric",
            Metric::FdKinetic => "fd_kinetic",
            Metric::BeatAlignment => "beat_alignment",
            Metric::Srgr => "srgr",
            Metric::DivPose => "div_pose",
            Metric::DivSample => "div_sample",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInput {
    /// Motion CSVs; sample `i` renders the same segment as `reference[i]`.
    pub motion: Vec<PathBuf>,
    /// Audio onset lists, one per motion sample.
    #[serde(default)]
    pub audio_onsets: Vec<PathBuf>,
    /// Semantic span tables, one per motion sample.
    #[serde(default)]
    pub spans: Vec<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub reference: Vec<PathBuf>,
    pub systems: BTreeMap<String, SystemInput>,
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub extractor: DefaultExtractor,
    #[serde(default)]
    pub beats: BeatDetection,
    #[serde(default = "default_sigma")]
    pub beat_sigma: f64,
    #[serde(default = "default_srgr_threshold")]
    pub srgr_threshold: f64,
}

fn default_sigma() -> f64 {
    DEFAULT_BEAT_SIGMA
}

fn default_srgr_threshold() -> f64 {
    DEFAULT_SRGR_THRESHOLD
}

pub type MetricsTable = BTreeMap<String, BTreeMap<&'static str, f64>>;

fn load_all(base: &Path, paths: &[PathBuf]) -> Result<Vec<MotionSequence>, CliError> {
    paths
        .iter()
        .map(|p| read_motion(&base.join(p)).map_err(|e| CliError::from(e).context(p.display())))
        .collect()
}

fn need(field: &str, system: &str, got: usize, want: usize) -> Result<(), CliError> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "systems.{system}.{field}: {got} entries for {want} motion samples"
        )))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn run(config_path: &Path) -> Result<MetricsTable, CliError> {
    let cfg: MetricsConfig = serde_json::from_str(&read_text(config_path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", config_path.display())))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let metrics: Vec<Metric> = if cfg.metrics.is_empty() {
        vec![
            Metric::Fgd,
            Metric::FdGeometric,
            Metric::FdKinetic,
            Metric::BeatAlignment,
            Metric::Srgr,
            Metric::DivPose,
            Metric::DivSample,
        ]
    } else {
        cfg.metrics.clone()
    };
    let reference = load_all(base, &cfg.reference)?;
    let mut table = MetricsTable::new();
    for (name, sys) in &cfg.systems {
        let generated = load_all(base, &sys.motion)?;
        let n = generated.len();
        let mut row = BTreeMap::new();
        for &m in &metrics {
            let ctx = |e: CliError| e.context(format!("{name}/{}", m.name()));
            let value = match m {
                Metric::Fgd => fgd(&reference, &generated, &cfg.extractor).map(|r| r.distance)?,
                Metric::FdGeometric => fd_geometric(&reference, &generated).map(|r| r.distance)?,
                Metric::FdKinetic => fd_kinetic(&reference, &generated).map(|r| r.distance)?,
                Metric::BeatAlignment => {
                    need("audio_onsets", name, sys.audio_onsets.len(), n)?;
                    let mut scores = Vec::with_capacity(n);
                    for (motion, onsets) in generated.iter().zip(&sys.audio_onsets) {
                        let audio = parse_onsets(&read_text(&base.join(onsets))?)?;
                        let beats = detect_motion_beats(motion, &cfg.beats)?;
                        scores.push(beat_alignment(&beats, &audio, cfg.beat_sigma).map_err(|e| ctx(e.into()))?);
                    }
                    mean(&scores)
                }
                Metric::Srgr => {
                    need("spans", name, sys.spans.len(), n)?;
                    need("reference", name, reference.len(), n)?;
                    let mut scores = Vec::with_capacity(n);
                    for ((r, g), spans) in reference.iter().zip(&generated).zip(&sys.spans) {
                        let spans = parse_spans(&read_text(&base.join(spans))?)?;
                        scores.push(srgr(r, g, &spans, cfg.srgr_threshold).map_err(|e| ctx(e.into()))?);
                    }
                    mean(&scores)
                }
                Metric::DivPose => {
                    let values = generated.iter().map(div_pose).collect::<Result<Vec<_>, _>>()?;
                    mean(&values)
                }
                Metric::DivSample => div_sample(&generated)?,
            };
            row.insert(m.name(), value);
        }
        table.insert(name.clone(), row);
    }
    Ok(table)
}

pub fn to_csv(table: &MetricsTable) -> String {
    let mut out = String::from("system,metric,value\n");
    for (system, row) in table {
        for (metric, value) in row {
            out.push_str(&format!("{},{metric},{value}\n", gesteval::stats::csv_field(system)));
        }
    }
    out
}
