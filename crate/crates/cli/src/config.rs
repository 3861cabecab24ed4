//! Run configuration: a JSON document naming the mode and its parameters.

use std::fmt;
use std::path::{Path, PathBuf};

use cubic_core::dde::DEFAULT_STEP;
use cubic_core::DEFAULT_DELTAS;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    Sample,
    Compose,
    Verify,
    Generator,
    Dde,
    KernelCk,
    KernelCoeffs,
    KernelResidual,
}

impl Mode {
    pub const ALL: [Mode; 9] = [
        Mode::Evolve,
        Mode::Sample,
        Mode::Compose,
        Mode::Verify,
        Mode::Generator,
        Mode::Dde,
        Mode::KernelCk,
        Mode::KernelCoeffs,
        Mode::KernelResidual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::Sample => "sample",
            Mode::Compose => "compose",
            Mode::Verify => "verify",
            Mode::Generator => "generator",
            Mode::Dde => "dde",
            Mode::KernelCk => "kernel-ck",
            Mode::KernelCoeffs => "kernel-coeffs",
            Mode::KernelResidual => "kernel-residual",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A closed-form finite-state family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Example1 {
        #[serde(default)]
        epsilon: f64,
    },
    Uniform {
        n: usize,
    },
    Neutral {
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Example2,
    Example2Printed,
    TimeConstant { variance: f64 },
    Fixed,
}

/// Initial measure for the continuous modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Point {
        #[serde(default)]
        at: f64,
    },
    Gaussian { mean: f64, variance: f64 },
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec::Point { at: 0.0 }
    }
}

/// `(s, x, y, z, t, w)` for the coefficient and residual modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub w: f64,
}

fn default_tol() -> f64 {
    1e-9
}
fn default_h() -> f64 {
    DEFAULT_STEP
}
fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}
fn default_grid() -> [f64; 2] {
    [-20.0, 20.0]
}
fn default_nodes_per_panel() -> usize {
    16
}
fn default_fd_delta() -> f64 {
    0.1
}
fn default_probes() -> Vec<[f64; 4]> {
    vec![[0.0; 4]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Tensor file; relative paths are taken from the config's directory.
    pub tensor: Option<PathBuf>,
    pub family: Option<FamilySpec>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<i64>,
    pub population: Option<u64>,
    pub s: Option<f64>,
    pub tau: Option<f64>,
    pub t: Option<f64>,
    pub t_end: Option<f64>,
    pub s_max: Option<i64>,
    pub t_max: Option<i64>,
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub m0: MeasureSpec,
    /// Time at which `m0` is given; later measures are evolved from it.
    #[serde(default)]
    pub m0_time: f64,
    #[serde(default = "default_probes")]
    pub probes: Vec<[f64; 4]>,
    pub probe: Option<Probe>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_fd_delta")]
    pub fd_delta: f64,
    #[serde(default = "default_grid")]
    pub grid: [f64; 2],
    #[serde(default = "default_nodes_per_panel")]
    pub nodes_per_panel: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    read(path, None)
}

/// As [`parse_config`], for the subcommand `mode`.
pub fn load(path: &Path, mode: Mode) -> Result<RunConfig, ConfigError> {
    read(path, Some(mode))
}

fn read(path: &Path, mode: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_str(&text, mode)?;
    if let Some(tensor) = &config.tensor {
        if tensor.is_relative() {
            if let Some(dir) = path.parent() {
                config.tensor = Some(dir.join(tensor));
            }
        }
    }
    Ok(config)
}

/// Parses a configuration document. With `mode` given, a missing `mode`
/// field is filled in and a different one is rejected.
pub fn parse_str(text: &str, mode: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(given) = value.get("mode").and_then(|m| m.as_str()) {
        if !Mode::ALL.iter().any(|m| m.name() == given) {
            let valid: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
            return Err(field("mode", format!("unknown mode `{given}`; valid modes: {}", valid.join(", "))));
        }
    }
    if let (Some(mode), Some(obj)) = (mode, value.as_object_mut()) {
        match obj.get("mode").and_then(|m| m.as_str()) {
            Some(given) if given != mode.name() => {
                return Err(field("mode", format!("config says `{given}` but `{mode}` was requested")));
            }
            _ => {
                obj.insert("mode".into(), mode.name().into());
            }
        }
    }
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn finite(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(field(name, "must be finite"))
    }
}

fn require<T>(name: &'static str, v: &Option<T>, mode: Mode) -> Result<(), ConfigError> {
    if v.is_none() {
        return Err(field(name, format!("required by mode `{mode}`")));
    }
    Ok(())
}

fn integral(name: &'static str, v: Option<f64>) -> Result<(), ConfigError> {
    if let Some(v) = v {
        if v.fract() != 0.0 {
            return Err(field(name, format!("must be an integer time, got {v}")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("s", self.s),
            ("tau", self.tau),
            ("t", self.t),
            ("t_end", self.t_end),
            ("m0_time", Some(self.m0_time)),
        ] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(field("tol", "must be finite and positive"));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(field("h", "must be finite and positive"));
        }
        if !(self.fd_delta.is_finite() && self.fd_delta > 0.0) {
            return Err(field("fd_delta", "must be finite and positive"));
        }
        if self.deltas.len() < 2 || self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(field("deltas", "need at least two finite positive steps"));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(field("deltas", "steps must be strictly decreasing"));
        }
        if !(self.grid.iter().all(|g| g.is_finite()) && self.grid[0] < self.grid[1]) {
            return Err(field("grid", "need finite lo < hi"));
        }
        if self.nodes_per_panel == 0 {
            return Err(field("nodes_per_panel", "must be positive"));
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(field("x0", "entries must be finite"));
            }
        }
        if let Some(h) = self.horizon {
            if h < 0 {
                return Err(field("horizon", format!("must be nonnegative, got {h}")));
            }
        }
        if self.probes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(field("probes", "entries must be finite"));
        }
        if let Some(p) = &self.probe {
            if [p.s, p.x, p.y, p.z, p.t, p.w].iter().any(|v| !v.is_finite()) {
                return Err(field("probe", "entries must be finite"));
            }
        }
        if let Some(KernelSpec::TimeConstant { variance }) = &self.kernel {
            if !(variance.is_finite() && *variance > 0.0) {
                return Err(field("kernel", "variance must be finite and positive"));
            }
        }
        if let MeasureSpec::Gaussian { mean, variance } = &self.m0 {
            finite("m0", *mean)?;
            if !(variance.is_finite() && *variance >= 0.0) {
                return Err(field("m0", "variance must be finite and nonnegative"));
            }
        }

        let mode = self.mode;
        match mode {
            Mode::Evolve => {
                require("tensor", &self.tensor, mode)?;
                require("x0", &self.x0, mode)?;
                require("horizon", &self.horizon, mode)?;
            }
            Mode::Sample => {
                require("tensor", &self.tensor, mode)?;
                require("x0", &self.x0, mode)?;
                require("horizon", &self.horizon, mode)?;
                require("population", &self.population, mode)?;
                if self.population == Some(0) {
                    return Err(field("population", "must be positive"));
                }
            }
            Mode::Compose => {
                require("tensor", &self.tensor, mode)?;
                require("x0", &self.x0, mode)?;
                require("s", &self.s, mode)?;
                require("t", &self.t, mode)?;
                integral("s", self.s)?;
                integral("t", self.t)?;
            }
            Mode::Verify => {
                require("family", &self.family, mode)?;
                require("x0", &self.x0, mode)?;
                require("t_max", &self.t_max, mode)?;
            }
            Mode::Generator => {
                require("family", &self.family, mode)?;
                require("x0", &self.x0, mode)?;
                require("t", &self.t, mode)?;
            }
            Mode::Dde => {
                require("family", &self.family, mode)?;
                require("x0", &self.x0, mode)?;
                require("t_end", &self.t_end, mode)?;
                integral("s", self.s)?;
            }
            Mode::KernelCk => {
                require("kernel", &self.kernel, mode)?;
                require("s", &self.s, mode)?;
                require("tau", &self.tau, mode)?;
                require("t", &self.t, mode)?;
                if self.probes.is_empty() {
                    return Err(field("probes", "need at least one probe"));
                }
            }
            Mode::KernelCoeffs | Mode::KernelResidual => {
                require("kernel", &self.kernel, mode)?;
                require("probe", &self.probe, mode)?;
            }
        }
        Ok(())
    }
}
