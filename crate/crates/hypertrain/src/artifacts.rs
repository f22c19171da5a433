//! Run outputs: JSON-lines records, a CSV table, a JSON summary and the
//! final hypernetwork parameters.
//!
//! Nothing here depends on wall-clock time, so rerunning a configuration
//! reproduces every file byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hypertrain_core::algorithms::RunRecord;
use hypertrain_core::HypernetParams;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TABLE_FILE: &str = "summary.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const REPORT_FILE: &str = "report.json";

/// A CSV table with a fixed header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| escape(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Everything a subcommand produces.
#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub records: Vec<RunRecord>,
    pub table: Table,
    pub summary: Map<String, Value>,
    pub params: Option<HypernetParams>,
    /// Detailed report for experiments that have one.
    pub report: Option<Value>,
}

impl RunArtifacts {
    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }
}

#[derive(Serialize)]
struct RecordLine<'a> {
    phase: &'static str,
    iteration: u64,
    lambda: &'a [f64],
    train_loss: f64,
    valid_loss: f64,
    test_loss: Option<f64>,
    grad_evals: u64,
    seed: u64,
    clamped: bool,
}

pub fn record_json(r: &RunRecord) -> Result<String> {
    Ok(serde_json::to_string(&RecordLine {
        phase: r.phase.name(),
        iteration: r.iteration,
        lambda: &r.lambda,
        train_loss: r.train_loss,
        valid_loss: r.valid_loss,
        test_loss: r.test_loss,
        grad_evals: r.grad_evals,
        seed: r.seed,
        clamped: r.clamped,
    })?)
}

/// Owns an output directory; all files of a run are written through it.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(ArtifactWriter { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    /// Writes every artifact and returns the paths written.
    pub fn write(&self, run: &RunArtifacts) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();

        let path = self.dir.join(RECORDS_FILE);
        let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for r in &run.records {
            writeln!(out, "{}", record_json(r)?).map_err(|e| HarnessError::io(&path, e))?;
        }
        out.flush().map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);

        written.push(self.put(TABLE_FILE, run.table.to_csv().as_bytes())?);
        let summary = serde_json::to_string_pretty(&run.summary)? + "\n";
        written.push(self.put(SUMMARY_FILE, summary.as_bytes())?);
        if let Some(params) = &run.params {
            written.push(self.put(PARAMS_FILE, &params.to_bytes())?);
        }
        if let Some(report) = &run.report {
            written.push(self.put(REPORT_FILE, serde_json::to_string(report)?.as_bytes())?);
        }
        Ok(written)
    }
}
