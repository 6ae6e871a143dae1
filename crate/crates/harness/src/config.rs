//! Run configuration.
//!
//! A configuration is a flat TOML document: scalar keys, arrays and inline
//! matrices (arrays of rows). Matrices may instead name a text file holding
//! one whitespace-separated row per line, relative to the config file.
//!
//! ```toml
//! name = "demo"
//! input_dims = [1, 1]
//! output_dims = [1, 1]
//! lower = [-10.0]            # one value for every coordinate, or n values
//! upper = [10.0]
//! output_map = "explicit"    # explicit | random | aircraft
//! c = [[1.0, 0.5], [0.0, 1.0]]
//! epoch_source = "random_qp" # explicit | random_qp | aircraft
//! epoch_count = 4
//! kappa = [20]               # ticks per epoch, one value or one per epoch
//! b = 2
//! p_update = 0.3
//! p_measure = 0.3
//! p_communicate = 0.3
//! delay_max = 1
//! step = "constant"          # constant | per_epoch | auto
//! gamma = [0.01]
//! seed = 7
//! ```
//!
//! Explicit epochs are given as `[[epoch]]` tables with keys `q_mat`,
//! `q_vec`, `p_mat` and either `theta` or `p_vec`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMapKind {
    Explicit,
    /// Entries standard normal scaled by `1/√n`.
    Random,
    /// Block-diagonal with the linearised F-16XL output rows.
    Aircraft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochSourceKind {
    Explicit,
    /// `Q = AᵀA + I`, `P = BᵀB + I`, `q, p` standard normal, fresh per epoch.
    RandomQp,
    /// Altitude tracking with closed-loop acceleration targets.
    Aircraft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// One `gamma` for every epoch.
    Constant,
    /// One `gamma` entry per epoch.
    PerEpoch,
    /// `gamma_fraction` times the fixed point of the step cap.
    Auto,
}

/// A matrix given inline as rows or by file name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    File(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSpec {
    pub q_mat: MatrixSpec,
    pub q_vec: Vec<f64>,
    pub p_mat: MatrixSpec,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub p_vec: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn default_fraction() -> f64 {
    0.9
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub name: String,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Common starting point; defaults to the projection of the origin.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    pub output_map: OutputMapKind,
    #[serde(default)]
    pub c: Option<MatrixSpec>,
    pub epoch_source: EpochSourceKind,
    #[serde(default, rename = "epoch")]
    pub epochs: Vec<EpochSpec>,
    pub epoch_count: usize,
    pub kappa: Vec<usize>,
    pub b: usize,
    pub p_update: f64,
    pub p_measure: f64,
    pub p_communicate: f64,
    pub delay_max: usize,
    pub step: StepKind,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default = "default_fraction")]
    pub gamma_fraction: f64,
    pub seed: u64,
    /// Error-bound constant; estimated by sampling when absent.
    #[serde(default)]
    pub lambda_eb: Option<f64>,
    /// Write every this many ticks to the trace files.
    #[serde(default = "one")]
    pub thin: usize,
    /// Evaluate lemma and bound checks.
    #[serde(default = "yes")]
    pub checks: bool,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Directory that relative matrix files are resolved against.
    #[serde(default, skip_serializing)]
    pub base_dir: Option<PathBuf>,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn agents(&self) -> usize {
        self.input_dims.len()
    }

    pub fn n(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn m(&self) -> usize {
        self.output_dims.iter().sum()
    }

    /// Epoch lengths, one per epoch.
    pub fn kappas(&self) -> Vec<usize> {
        if self.kappa.len() == 1 {
            vec![self.kappa[0]; self.epoch_count]
        } else {
            self.kappa.clone()
        }
    }

    pub fn horizon(&self) -> usize {
        self.kappas().iter().sum()
    }

    /// Hex SHA-256 of the canonical JSON form; output paths are excluded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self, file: &str) -> PathBuf {
        match &self.base_dir {
            Some(dir) => dir.join(file),
            None => PathBuf::from(file),
        }
    }

    /// Checks everything that can be checked without building matrices.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let agents = self.agents();
        if agents == 0 || agents != self.output_dims.len() {
            return bad(format!(
                "{} input blocks but {} output blocks",
                agents,
                self.output_dims.len()
            ));
        }
        let n = self.n();
        for (name, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != 1 && v.len() != n {
                return bad(format!("`{name}` needs 1 or {n} entries, got {}", v.len()));
            }
        }
        if let Some(init) = &self.init {
            if init.len() != n {
                return bad(format!("`init` needs {n} entries, got {}", init.len()));
            }
        }
        if self.epoch_count == 0 {
            return bad("`epoch_count` must be positive".into());
        }
        if self.kappa.len() != 1 && self.kappa.len() != self.epoch_count {
            return bad(format!(
                "`kappa` needs 1 or {} entries, got {}",
                self.epoch_count,
                self.kappa.len()
            ));
        }
        if self.b == 0 {
            return bad("`b` must be positive".into());
        }
        if let Some(k) = self.kappas().iter().find(|k| **k == 0 || **k % self.b != 0) {
            return bad(format!("epoch length {k} is not a positive multiple of B = {}", self.b));
        }
        for (name, p) in [
            ("p_update", self.p_update),
            ("p_measure", self.p_measure),
            ("p_communicate", self.p_communicate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("`{name}` = {p} is not a probability"));
            }
        }
        if self.delay_max + 1 > self.b {
            return bad(format!("`delay_max` = {} must be at most B - 1", self.delay_max));
        }
        match self.step {
            StepKind::Constant if self.gamma.len() != 1 => {
                return bad("`step = \"constant\"` needs exactly one `gamma`".into())
            }
            StepKind::PerEpoch if self.gamma.len() != self.epoch_count => {
                return bad(format!("`step = \"per_epoch\"` needs {} `gamma` entries", self.epoch_count))
            }
            StepKind::Auto if !(self.gamma_fraction > 0.0 && self.gamma_fraction < 1.0) => {
                return bad("`gamma_fraction` must lie in (0, 1)".into())
            }
            _ => {}
        }
        if self.step != StepKind::Auto && self.gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("step sizes must be positive and finite".into());
        }
        if self.output_map == OutputMapKind::Explicit && self.c.is_none() {
            return bad("`output_map = \"explicit\"` needs `c`".into());
        }
        if self.epoch_source == EpochSourceKind::Explicit && self.epochs.len() != self.epoch_count {
            return bad(format!(
                "{} `[[epoch]]` tables for `epoch_count` = {}",
                self.epochs.len(),
                self.epoch_count
            ));
        }
        if self.thin == 0 {
            return bad("`thin` must be positive".into());
        }
        if let Some(l) = self.lambda_eb {
            if !(l > 0.0) {
                return bad("`lambda_eb` must be positive".into());
            }
        }
        Ok(())
    }
}

/// Reads a whitespace-separated matrix, one row per line; `#` starts a comment.
pub fn read_matrix_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| {
                    HarnessError::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
