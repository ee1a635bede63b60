//! Newline-delimited JSON prediction logs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use disco_core::corpus::{FrameKind, Group};
use disco_core::detectors::{Evidence, FramePrediction, PredictionMode};
use serde::{Deserialize, Serialize};

/// One query and its verdict. Cache provenance is deliberately left out so a
/// resumed run logs exactly what a fresh one would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub movie_title: String,
    pub group: Group,
    pub mode: PredictionMode,
    pub kind: FrameKind,
    pub frame_ids: Vec<String>,
    pub correct: bool,
    pub raw_text: String,
    pub evidence: Evidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renyi: Option<Vec<f64>>,
    pub latency_ms: u64,
}

impl PredictionRecord {
    pub fn new(movie_title: &str, group: Group, p: FramePrediction) -> Self {
        Self {
            movie_title: movie_title.to_string(),
            group,
            mode: p.mode,
            kind: p.kind,
            frame_ids: p.frame_ids,
            correct: p.correct,
            raw_text: p.raw_text,
            evidence: p.evidence,
            renyi: p.renyi,
            latency_ms: p.latency_ms,
        }
    }

    pub fn to_prediction(&self) -> FramePrediction {
        FramePrediction {
            frame_ids: self.frame_ids.clone(),
            kind: self.kind,
            mode: self.mode,
            correct: self.correct,
            raw_text: self.raw_text.clone(),
            evidence: self.evidence.clone(),
            renyi: self.renyi.clone(),
            latency_ms: self.latency_ms,
            from_cache: false,
        }
    }
}

pub fn write(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<PredictionRecord>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}
