//! Panel directories, JSON documents and digests.

use std::fs;
use std::path::{Path, PathBuf};

use ccsl::{Panel, SubjectSeries};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};
use crate::manifest::RunManifest;

pub const PANEL_MANIFEST: &str = "manifest.json";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const FIT_RESULT: &str = "fit_result.json";
pub const EVAL_REPORT: &str = "eval.json";
pub const SWEEP_RESULTS: &str = "sweep_results.csv";

/// One subject entry of a panel manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub file: String,
    pub length: usize,
}

/// `manifest.json` of a panel directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub format_version: u32,
    pub m: usize,
    pub subjects: Vec<SubjectEntry>,
    pub run: RunManifest,
}

pub fn subject_file(id: &str) -> String {
    format!("subject_{id}.csv")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` and returns their digest.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(sha256_hex(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// A subject series as CSV: header `x0..x{m-1}`, one row per time step,
/// values in shortest round-trip decimal form.
pub fn series_to_csv(x: &SubjectSeries) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..x.n_vars()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).expect("in-memory write");
    for row in x.data.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn series_from_csv(id: &str, path: &Path, bytes: &[u8]) -> Result<SubjectSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let width = reader.headers().map_err(|e| csv_error(path, &e))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| CliError::Cell {
                file: path.to_path_buf(),
                line,
                column: j + 1,
                reason: format!("`{cell}` is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(SubjectSeries::new(
        id,
        DMatrix::from_row_slice(rows, width, &values),
    ))
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Reads a panel directory. Subjects come from `manifest.json` when it is
/// present, otherwise from every `subject_<id>.csv` in lexical order.
/// Returns the panel and the digest of every file read, keyed by name.
pub fn read_panel(dir: &Path) -> Result<(Panel, Vec<(String, String)>)> {
    let mut digests = Vec::new();
    let manifest_path = dir.join(PANEL_MANIFEST);
    let entries: Vec<(String, String)> = if manifest_path.exists() {
        let bytes = read_bytes(&manifest_path)?;
        digests.push((PANEL_MANIFEST.to_string(), sha256_hex(&bytes)));
        let manifest: PanelManifest = parse_json(&manifest_path, &bytes)?;
        manifest
            .subjects
            .into_iter()
            .map(|s| (s.id, s.file))
            .collect()
    } else {
        let mut found: Vec<(String, String)> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name
                    .strip_prefix("subject_")?
                    .strip_suffix(".csv")?
                    .to_string();
                Some((id, name))
            })
            .collect();
        found.sort();
        found
    };
    let mut subjects = Vec::with_capacity(entries.len());
    for (id, file) in entries {
        let path: PathBuf = dir.join(&file);
        let bytes = read_bytes(&path)?;
        subjects.push(series_from_csv(&id, &path, &bytes)?);
        digests.push((file, sha256_hex(&bytes)));
    }
    let panel = Panel::new(subjects)?;
    ccsl::validate_panel(&panel)?;
    Ok((panel, digests))
}
