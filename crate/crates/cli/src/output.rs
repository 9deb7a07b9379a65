//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting so
//! reruns with the same inputs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::svg::{render, Panel};
use crate::CliResult;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

pub fn write_svg(path: &Path, panels: &[Panel]) -> CliResult<PathBuf> {
    fs::write(path, render(panels))?;
    Ok(path.to_path_buf())
}

/// Row-major nested vectors for readable JSON.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}
