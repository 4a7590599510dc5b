//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! sink = 16
//! lag = 128, 512, 1024
//! ratio = 0.5, 0.25
//! strategy = lag, window-only
//! skip_layers = 0, 1
//! ```
//!
//! List-valued keys take comma-separated values. `S`, `L` and `r` are accepted as
//! aliases of `sink`, `lag` and `ratio`.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use lagkv::{CompressorConfig, Mode, Strategy};

use crate::error::CliError;

pub const SEED_ENV: &str = "LAGKV_SEED";

/// Lag sizes swept when none are configured.
pub const SWEEP_LAGS: [usize; 3] = [128, 512, 1024];
/// Retain ratios swept when none are configured (2x, 4x, 6x, 8x).
pub const SWEEP_RATIOS: [f64; 4] = [0.5, 0.25, 0.167, 0.125];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sink: usize,
    pub lags: Option<Vec<usize>>,
    pub ratios: Option<Vec<f64>>,
    pub strategies: Vec<Strategy>,
    pub eps: f64,
    /// `None` means the strategy's own default.
    pub skip_layers: Option<BTreeSet<usize>>,
    pub mode: Mode,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
    // Synthetic stream parameters for sweep / simulate.
    pub n_tokens: usize,
    pub head_dim: usize,
    pub kv_heads: usize,
    pub rho: f64,
    pub outliers: usize,
    pub outlier_magnitude: f64,
    pub queries: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sink: 16,
            lags: None,
            ratios: None,
            strategies: vec![Strategy::Lag],
            eps: CompressorConfig::DEFAULT_EPS,
            skip_layers: None,
            mode: Mode::Oneshot,
            input: None,
            output: None,
            seeds: vec![0],
            n_tokens: 16 + 1024 * 8,
            head_dim: 32,
            kv_heads: 2,
            rho: 0.9,
            outliers: 8,
            outlier_magnitude: 10.0,
            queries: 16,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{}`", value.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Config(format!("`{key}` needs at least one value")));
    }
    items.into_iter().map(|v| parse_one(key, v)).collect()
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies a single `key=value` pair.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`{assignment}`: expected key=value")))?;
        self.set(key.trim(), value)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "sink" | "S" => self.sink = parse_one(key, value)?,
            "lag" | "L" => self.lags = Some(parse_list(key, value)?),
            "ratio" | "r" => self.ratios = Some(parse_list(key, value)?),
            "strategy" => {
                self.strategies = parse_list(key, value)?;
            }
            "eps" => self.eps = parse_one(key, value)?,
            "skip_layers" => {
                let v = value.trim();
                self.skip_layers = Some(if v.is_empty() || v == "none" {
                    BTreeSet::new()
                } else {
                    parse_list(key, v)?.into_iter().collect()
                });
            }
            "mode" => self.mode = parse_one(key, value)?,
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "output" => self.output = Some(PathBuf::from(value.trim())),
            "seeds" | "seed" => self.seeds = parse_list(key, value)?,
            "n_tokens" => self.n_tokens = parse_one(key, value)?,
            "head_dim" => self.head_dim = parse_one(key, value)?,
            "kv_heads" => self.kv_heads = parse_one(key, value)?,
            "rho" => self.rho = parse_one(key, value)?,
            "outliers" => self.outliers = parse_one(key, value)?,
            "outlier_magnitude" => self.outlier_magnitude = parse_one(key, value)?,
            "queries" => self.queries = parse_one(key, value)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Replaces the seed list with `LAGKV_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seeds = parse_list(SEED_ENV, &v)?;
        }
        Ok(())
    }

    pub fn lags_or_default(&self, default: &[usize]) -> Vec<usize> {
        self.lags.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn ratios_or_default(&self, default: &[f64]) -> Vec<f64> {
        self.ratios.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn compressor(&self, lag: usize, ratio: f64, strategy: Strategy) -> Result<CompressorConfig, CliError> {
        let mut cfg = CompressorConfig::new(self.sink, lag, ratio, strategy).with_eps(self.eps);
        if let Some(skip) = &self.skip_layers {
            cfg.skip_layers = skip.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The single compressor for commands that do not sweep (defaults L=1024, r=0.25).
    pub fn single_compressor(&self) -> Result<CompressorConfig, CliError> {
        let lags = self.lags_or_default(&[1024]);
        let ratios = self.ratios_or_default(&[0.25]);
        match (&lags[..], &ratios[..], &self.strategies[..]) {
            ([lag], [ratio], [strategy]) => self.compressor(*lag, *ratio, *strategy),
            _ => Err(CliError::Config("lag, ratio and strategy must be single values here".into())),
        }
    }
}
