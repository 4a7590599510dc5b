use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token-scoring strategy used inside each compressible partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Min-max statistics taken from the next partition (the lag reference).
    #[serde(rename = "lag")]
    Lag,
    /// Min-max statistics taken from the partition itself.
    #[serde(rename = "local")]
    Local,
    /// Negative L2 norm of each key row.
    #[serde(rename = "l2norm")]
    L2Norm,
    /// Keeps the most recent tokens of each partition; no content scoring.
    #[serde(rename = "window-only")]
    WindowOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Lag, Strategy::Local, Strategy::L2Norm, Strategy::WindowOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Lag => "lag",
            Strategy::Local => "local",
            Strategy::L2Norm => "l2norm",
            Strategy::WindowOnly => "window-only",
        }
    }

    /// Layers left uncompressed unless the caller overrides the skip list.
    pub fn default_skip_layers(self) -> BTreeSet<usize> {
        match self {
            Strategy::L2Norm => BTreeSet::from([0, 1]),
            _ => BTreeSet::new(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lag" => Ok(Strategy::Lag),
            "local" => Ok(Strategy::Local),
            "l2norm" => Ok(Strategy::L2Norm),
            "window-only" => Ok(Strategy::WindowOnly),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressorConfig {
    /// Attention-sink size: raw positions `0..sink` are never evicted.
    pub sink: usize,
    /// Partition width.
    pub lag: usize,
    /// Fraction of each compressible partition kept.
    pub ratio: f64,
    pub strategy: Strategy,
    /// Floor for the min-max range denominator.
    pub eps: f64,
    pub skip_layers: BTreeSet<usize>,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        Self::new(16, 1024, 0.25, Strategy::Lag)
    }
}

impl CompressorConfig {
    pub const DEFAULT_EPS: f64 = 1e-6;

    /// Config with the strategy's default skip list and `eps = 1e-6`.
    pub fn new(sink: usize, lag: usize, ratio: f64, strategy: Strategy) -> Self {
        Self {
            sink,
            lag,
            ratio,
            strategy,
            eps: Self::DEFAULT_EPS,
            skip_layers: strategy.default_skip_layers(),
        }
    }

    pub fn with_skip_layers(mut self, layers: impl IntoIterator<Item = usize>) -> Self {
        self.skip_layers = layers.into_iter().collect();
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::InvalidConfig("lag size must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidConfig(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }

    /// Tokens kept per head in each compressed partition.
    pub fn keep_per_partition(&self) -> usize {
        super::keep_count(self.lag, self.ratio)
    }

    pub fn skips(&self, layer: usize) -> bool {
        self.skip_layers.contains(&layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_round_trips_through_strings() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!(matches!("h2o".parse::<Strategy>(), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn l2norm_skips_first_two_layers_by_default() {
        let cfg = CompressorConfig::new(16, 128, 0.5, Strategy::L2Norm);
        assert!(cfg.skips(0) && cfg.skips(1) && !cfg.skips(2));
        assert!(CompressorConfig::default().skip_layers.is_empty());
    }

    #[test]
    fn validate_rejects_bad_values() {
        assert!(CompressorConfig::new(16, 0, 0.5, Strategy::Lag).validate().is_err());
        assert!(CompressorConfig::new(16, 8, 0.0, Strategy::Lag).validate().is_err());
        assert!(CompressorConfig::new(16, 8, 1.5, Strategy::Lag).validate().is_err());
        assert!(CompressorConfig::new(16, 8, 0.5, Strategy::Lag).with_eps(0.0).validate().is_err());
        assert!(CompressorConfig::default().validate().is_ok());
    }
}
