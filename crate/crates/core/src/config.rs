//! Run configuration for the `figures` experiment.
//!
//! The file format is flat `key = value` lines. `#` starts a comment, blank
//! lines are ignored, and list values are comma separated.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::policies::PolicyKind;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AOI_TRADEOFF_OUT_DIR";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for {key}: {msg}")]
    Value { key: String, msg: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, OutputFormat::Svg | OutputFormat::Both)
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Svg => "svg",
            OutputFormat::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub q_values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub rate_points: usize,
    /// Top of the rate grid as a fraction of the maximum zero-wait rate.
    pub rate_fraction: f64,
    pub tau_max: Option<u64>,
    pub v_max: Option<u64>,
    pub eps: f64,
    pub refine_tol: f64,
    pub p_grid: usize,
    pub seed: u64,
    pub sim_cycles: u64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q_values: vec![0.2, 0.5, 0.7],
            policies: PolicyKind::ALL.to_vec(),
            rate_points: 40,
            rate_fraction: 0.98,
            tau_max: None,
            v_max: None,
            eps: 1e-8,
            refine_tol: 1e-10,
            p_grid: 256,
            seed: 1,
            sim_cycles: 200_000,
            out_dir: default_out_dir(),
            format: OutputFormat::Both,
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

const KEYS: &[&str] = &[
    "q",
    "policies",
    "rate_points",
    "rate_fraction",
    "tau_max",
    "v_max",
    "eps",
    "refine_tol",
    "p_grid",
    "seed",
    "sim_cycles",
    "out_dir",
    "format",
];

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

pub fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| bad(key, format!("{s:?}: {e}"))))
        .collect()
}

pub fn parse_policy_list(key: &str, value: &str) -> Result<Vec<PolicyKind>, ConfigError> {
    if value.trim() == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    value.split(',').map(|s| s.trim().parse::<PolicyKind>().map_err(|e| bad(key, e))).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, format!("{value:?}: {e}")))
}

fn parse_opt_u64(key: &str, value: &str) -> Result<Option<u64>, ConfigError> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            };
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            cfg.set(known, value)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "q" => self.q_values = parse_f64_list(key, value)?,
            "policies" => self.policies = parse_policy_list(key, value)?,
            "rate_points" => self.rate_points = parse_num(key, value)?,
            "rate_fraction" => self.rate_fraction = parse_num(key, value)?,
            "tau_max" => self.tau_max = parse_opt_u64(key, value)?,
            "v_max" => self.v_max = parse_opt_u64(key, value)?,
            "eps" => self.eps = parse_num(key, value)?,
            "refine_tol" => self.refine_tol = parse_num(key, value)?,
            "p_grid" => self.p_grid = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "sim_cycles" => self.sim_cycles = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "format" => {
                self.format = match value {
                    "csv" => OutputFormat::Csv,
                    "svg" => OutputFormat::Svg,
                    "both" => OutputFormat::Both,
                    _ => return Err(bad(key, "expected csv, svg or both")),
                }
            }
            _ => unreachable!("key list and setter disagree"),
        }
        Ok(())
    }

    /// Range checks shared by file parsing and CLI overrides.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.q_values.is_empty() || self.q_values.iter().any(|q| !(*q > 0.0 && *q <= 1.0)) {
            return Err(bad("q", "every q must lie in (0, 1]"));
        }
        if self.policies.is_empty() {
            return Err(bad("policies", "at least one policy is required"));
        }
        if !(self.rate_fraction > 0.0 && self.rate_fraction < 1.0) {
            return Err(bad("rate_fraction", "must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(bad("eps", "must be positive"));
        }
        if !(self.refine_tol > 0.0) {
            return Err(bad("refine_tol", "must be positive"));
        }
        if self.p_grid < 2 {
            return Err(bad("p_grid", "must be at least 2"));
        }
        if self.tau_max == Some(0) {
            return Err(bad("tau_max", "must be at least 1"));
        }
        if self.v_max == Some(0) {
            return Err(bad("v_max", "must be at least 1"));
        }
        Ok(())
    }
}
