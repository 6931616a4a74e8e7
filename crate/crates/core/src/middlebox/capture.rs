use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::rules::Direction;
use crate::wire::{parse_message, Message};

/// Whether bytes were captured as they arrived at a hop or as it sent them on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Received,
    Forwarded,
}

#[derive(Debug, Clone)]
pub struct CaptureRecord {
    pub hop: usize,
    pub direction: Direction,
    pub stage: Stage,
    pub raw: Vec<u8>,
    /// `None` when the bytes did not parse.
    pub parsed: Option<Message>,
    pub at: u64,
}

#[derive(Serialize)]
struct RecordJson {
    hop: usize,
    direction: Direction,
    stage: Stage,
    at: u64,
    start: String,
    raw_b64: String,
}

/// Append-only record of everything the middleboxes saw. Clones share the
/// same log.
#[derive(Debug, Clone, Default)]
pub struct CaptureLog(Arc<Mutex<Vec<CaptureRecord>>>);

impl CaptureLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, hop: usize, direction: Direction, stage: Stage, raw: &[u8], at: u64) {
        let record = CaptureRecord {
            hop,
            direction,
            stage,
            raw: raw.to_vec(),
            parsed: parse_message(raw).ok(),
            at,
        };
        self.0.lock().unwrap_or_else(|p| p.into_inner()).push(record);
    }

    pub fn records(&self) -> Vec<CaptureRecord> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every captured record whose raw bytes contain `needle`.
    pub fn find(&self, needle: &[u8]) -> Vec<usize> {
        if needle.is_empty() {
            return Vec::new();
        }
        self.0
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .enumerate()
            .filter(|(_, r)| r.raw.windows(needle.len()).any(|w| w == needle))
            .map(|(i, _)| i)
            .collect()
    }

    /// One JSON object per line, raw bytes in base64url.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in self.records() {
            let start = r
                .parsed
                .as_ref()
                .map(|m| match (m.method(), m.target(), m.status()) {
                    (Some(a), Some(b), _) => format!("{a} {b}"),
                    (_, _, Some(s)) => s.to_string(),
                    _ => String::new(),
                })
                .unwrap_or_else(|| "<unparsed>".into());
            let line = serde_json::to_string(&RecordJson {
                hop: r.hop,
                direction: r.direction,
                stage: r.stage,
                at: r.at,
                start,
                raw_b64: crate::wire::b64_encode(&r.raw),
            })
            .map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        out.flush()
    }
}
