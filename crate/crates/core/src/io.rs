//! File formats.
//!
//! * Sequence files: one symbol per line, `L x y` for a learning pair and
//!   `S i` for signal index `i`. Blank lines and `#` comments are ignored.
//! * CSV tables with a header row: capital trajectories
//!   (`position,numerator,denominator`), learner traces and sample streams
//!   (`x,y,n,b`).
//! * JSON lines: one serialized record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::betting::Capital;
use crate::learner::{Sample, TraceRow};
use crate::protocol::SwitchSymbol;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_owned(),
        source,
    }
}

pub fn parse_symbol(line: &str) -> Result<SwitchSymbol, String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let bit = |t: &str| match t {
        "0" => Ok(0u8),
        "1" => Ok(1u8),
        _ => Err(format!("expected a bit, got `{t}`")),
    };
    match toks.as_slice() {
        ["L", x, y] => Ok(SwitchSymbol::Learn { x: bit(x)?, y: bit(y)? }),
        ["S", i] => match i.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(SwitchSymbol::Signal { i }),
            _ => Err(format!("signal index must be a positive integer, got `{i}`")),
        },
        _ => Err(format!("expected `L x y` or `S i`, got `{line}`")),
    }
}

pub fn parse_sequence(text: &str, path: &Path) -> Result<Vec<SwitchSymbol>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_symbol(line).map_err(|msg| IoError::Parse {
            path: path.to_owned(),
            line: i + 1,
            msg,
        })?);
    }
    Ok(out)
}

pub fn read_sequence(path: &Path) -> Result<Vec<SwitchSymbol>, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    parse_sequence(&text, path)
}

pub fn write_sequence(path: &Path, symbols: &[SwitchSymbol]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(file_err(path))?);
    for s in symbols {
        writeln!(w, "{s}").map_err(file_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub position: usize,
    pub numerator: String,
    pub denominator: String,
}

pub fn trajectory_rows(trajectory: &[Capital]) -> Vec<TrajectoryRow> {
    trajectory
        .iter()
        .enumerate()
        .map(|(position, c)| TrajectoryRow {
            position,
            numerator: c.numer().to_string(),
            denominator: c.denom().to_string(),
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

pub fn write_trajectory(path: &Path, trajectory: &[Capital]) -> Result<(), IoError> {
    write_csv(path, &trajectory_rows(trajectory))
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>, IoError> {
    read_csv(path)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), IoError> {
    write_csv(path, rows)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(file_err(path))?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|source| IoError::Json {
            path: path.to_owned(),
            source,
        })?;
        w.write_all(b"\n").map_err(file_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let r = BufReader::new(File::open(path).map_err(file_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_owned(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
