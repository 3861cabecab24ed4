//! File formats: tensors as JSON `{n, kind, entries}` with a flat row-major
//! entry list, trajectories and measures as CSV.
//!
//! Floats are written in shortest round-trip form, so a value read back is
//! bit-identical to the one written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cubic_core::dde::DdeSolution;
use cubic_core::kernel::MeasureGrid;
use cubic_core::{CubicTensor, GeneratorTensor, SimplexVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl IoError {
    fn fs(path: &Path, source: std::io::Error) -> Self {
        IoError::Fs {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, reason: impl ToString) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    /// `p[i][j][k][l]`, a cubic stochastic tensor.
    Cubic,
    /// Generator coefficients `a[m][g][d][l]`; rows sum to zero.
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub n: usize,
    pub kind: TensorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    /// `[s, t]` for a member of a transition family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<[f64; 2]>,
    pub entries: Vec<f64>,
}

impl TensorFile {
    pub fn cubic(t: &CubicTensor) -> Self {
        Self {
            n: t.n(),
            kind: TensorKind::Cubic,
            time: None,
            span: None,
            entries: t.entries().to_vec(),
        }
    }

    pub fn generator(g: &GeneratorTensor) -> Self {
        Self {
            n: g.n(),
            kind: TensorKind::Generator,
            time: Some(g.time),
            span: None,
            entries: g.values.entries().to_vec(),
        }
    }

    pub fn tensor(&self) -> cubic_core::Result<CubicTensor> {
        CubicTensor::new(self.n, self.entries.clone())
    }
}

pub fn read_tensor_file(path: &Path) -> Result<TensorFile, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::format(path, e))
}

/// Reads a cubic tensor; generator files are refused.
pub fn read_tensor(path: &Path) -> Result<CubicTensor, IoError> {
    let file = read_tensor_file(path)?;
    if file.kind != TensorKind::Cubic {
        return Err(IoError::format(path, "expected a tensor of kind `cubic`"));
    }
    file.tensor().map_err(|e| IoError::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| IoError::fs(path, e))
}

pub fn write_tensor(path: &Path, file: &TensorFile) -> Result<(), IoError> {
    write_json(path, file)
}

fn header(n: usize) -> String {
    let mut h = String::from("time");
    for i in 0..n {
        write!(h, ",x{i}").unwrap();
    }
    h.push('\n');
    h
}

fn push_row(out: &mut String, time: impl std::fmt::Display, values: &[f64]) {
    write!(out, "{time}").unwrap();
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
}

/// `time,x0,..,x{n-1}` with integer times starting at `start`.
pub fn trajectory_csv(start: i64, states: &[SimplexVector]) -> String {
    let n = states.first().map_or(0, SimplexVector::n);
    let mut out = header(n);
    for (i, x) in states.iter().enumerate() {
        push_row(&mut out, start + i as i64, x.probs());
    }
    out
}

/// Grid solution, one row per node; columns `x0..` index the flattened state.
pub fn dde_csv(sol: &DdeSolution) -> String {
    let mut out = header(sol.dim());
    for (t, v) in sol.times.iter().zip(&sol.values) {
        push_row(&mut out, t, v);
    }
    out
}

pub fn measure_csv(m: &MeasureGrid) -> String {
    let mut out = String::from("node,weight,density\n");
    for ((x, w), d) in m.nodes.iter().zip(&m.weights).zip(&m.density) {
        writeln!(out, "{x},{w},{d}").unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::fs(path, e))
}
