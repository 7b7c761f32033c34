//! Machine-readable training log: one JSON line per epoch plus a header line
//! carrying the effective configuration.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;

/// Per-source loss decomposition within one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLog {
    pub source: String,
    pub samples: usize,
    pub l3d: f64,
    pub l2d: f64,
    pub lsymm: f64,
}

/// One epoch of one training phase.
///
/// Components are means over every sample the epoch consumed; `total` is
/// recomposed from the averaged components with the phase's weights, so the
/// identity `total = α·l3d + β·l2d + γ·lsymm` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub epoch: usize,
    pub batches: usize,
    pub weights: LossWeights,
    pub l3d: f64,
    pub l2d: f64,
    pub lsymm: f64,
    pub total: f64,
    pub per_source: Vec<SourceLog>,
    pub wall_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine<'a> {
    kind: &'a str,
    #[serde(flatten)]
    config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct EpochLine {
    kind: String,
    #[serde(flatten)]
    record: EpochLog,
}

/// Collects epoch records in memory and, optionally, streams them to a file
/// as they happen so interrupted runs keep their history.
pub struct TrainLog {
    pub records: Vec<EpochLog>,
    writer: Option<std::io::BufWriter<std::fs::File>>,
}

impl TrainLog {
    pub fn in_memory() -> Self {
        Self {
            records: Vec::new(),
            writer: None,
        }
    }

    /// Create (or append to) a log file, writing a header line with the
    /// effective configuration when the file starts empty.
    pub fn to_file(path: &Path, config: &serde_json::Value) -> Result<Self> {
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        if !exists {
            let header = HeaderLine {
                kind: "header",
                config: config.clone(),
            };
            writeln!(writer, "{}", serde_json::to_string(&header).expect("header"))
                .map_err(|e| Error::io(path, e))?;
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            records: Vec::new(),
            writer: Some(writer),
        })
    }

    pub fn push(&mut self, record: EpochLog) -> Result<()> {
        if let Some(w) = &mut self.writer {
            let line = EpochLine {
                kind: "epoch".into(),
                record: record.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("epoch log"))
                .map_err(|e| Error::Invalid {
                    op: "TrainLog",
                    msg: e.to_string(),
                })?;
            w.flush().map_err(|e| Error::Invalid {
                op: "TrainLog",
                msg: e.to_string(),
            })?;
        }
        self.records.push(record);
        Ok(())
    }
}

/// Read a log file back: the header (when present) and every epoch record.
pub fn read_log(path: &Path) -> Result<(Option<serde_json::Value>, Vec<EpochLog>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Invalid {
                op: "read_log",
                msg: format!("line {i}: {e}"),
            })?;
        match value.get("kind").and_then(|k| k.as_str()) {
            Some("header") => header = Some(value),
            Some("epoch") => {
                let record: EpochLog =
                    serde_json::from_value(value).map_err(|e| Error::Invalid {
                        op: "read_log",
                        msg: format!("line {i}: {e}"),
                    })?;
                records.push(record);
            }
            _ => {
                return Err(Error::Invalid {
                    op: "read_log",
                    msg: format!("line {i}: missing record kind"),
                })
            }
        }
    }
    Ok((header, records))
}
