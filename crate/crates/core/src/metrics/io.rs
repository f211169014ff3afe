//! Motion CSV files with JSON sidecar manifests, onset lists and span tables.

use std::path::{Path, PathBuf};

use super::{ChannelManifest, MetricsError, MotionSequence, SemanticSpan};

fn io_err(path: &Path, e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io(format!("{}: {e}", path.display()))
}

/// `walk.csv` → `walk.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Parse a motion matrix. The header row must list the manifest's channels.
pub fn parse_motion_csv(text: &str, manifest: ChannelManifest) -> Result<MotionSequence, MetricsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| MetricsError::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != manifest.channels {
        return Err(MetricsError::Parse(format!(
            "header {:?} does not match manifest channels {:?}",
            header, manifest.channels
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| MetricsError::Parse(e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| MetricsError::Parse(format!("row {}: {v:?}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    MotionSequence::new(&rows, manifest)
}

pub fn read_motion(csv_path: &Path) -> Result<MotionSequence, MetricsError> {
    let manifest_path = sidecar_path(csv_path);
    let manifest_text = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: ChannelManifest =
        serde_json::from_str(&manifest_text).map_err(|e| MetricsError::Parse(format!("{}: {e}", manifest_path.display())))?;
    let text = std::fs::read_to_string(csv_path).map_err(|e| io_err(csv_path, e))?;
    parse_motion_csv(&text, manifest)
}

pub fn motion_to_csv(motion: &MotionSequence) -> String {
    let mut out = motion.manifest.channels.join(",");
    out.push('\n');
    for row in motion.frames.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write the CSV and its sidecar manifest.
pub fn write_motion(csv_path: &Path, motion: &MotionSequence) -> Result<(), MetricsError> {
    std::fs::write(csv_path, motion_to_csv(motion)).map_err(|e| io_err(csv_path, e))?;
    let manifest = serde_json::to_string_pretty(&motion.manifest).expect("manifest serializes");
    let path = sidecar_path(csv_path);
    std::fs::write(&path, manifest).map_err(|e| io_err(&path, e))
}

/// One onset time in seconds per line; blank lines and `#` comments ignored.
pub fn parse_onsets(text: &str) -> Result<Vec<f64>, MetricsError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| MetricsError::Parse(format!("line {}: {l:?}: {e}", i + 1)))
        })
        .collect()
}

/// CSV with columns `start_s,end_s,weight`.
pub fn parse_spans(text: &str) -> Result<Vec<SemanticSpan>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| MetricsError::Parse(e.to_string())))
        .collect()
}
