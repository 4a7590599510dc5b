//! Synthetic KV streams with token-wise locality, and a toy attention read-out
//! for comparing full and compressed caches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::compressor::{run_compression, MetricsReport, Mode};
use crate::error::{Error, Result};
use crate::kv_model::{partition_layout, CompressorConfig, HeadCache, LayerCache, PartitionLayout};
use crate::numerics::{softmax, Matrix};

/// Parameters of an AR(1) KV stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub seed: u64,
    pub n_tokens: usize,
    pub head_dim: usize,
    pub kv_heads: usize,
    /// Lag-1 correlation between consecutive tokens, in `[0, 1)`.
    pub rho: f64,
    /// Per-channel multipliers; empty means all ones.
    pub channel_scales: Vec<f64>,
    /// `(position, magnitude)`: the innovation at `position` is scaled by `magnitude`.
    pub outliers: Vec<(usize, f64)>,
}

impl StreamSpec {
    pub fn new(seed: u64, n_tokens: usize, head_dim: usize, kv_heads: usize, rho: f64) -> Self {
        Self { seed, n_tokens, head_dim, kv_heads, rho, channel_scales: Vec::new(), outliers: Vec::new() }
    }

    pub fn with_channel_scales(mut self, scales: Vec<f64>) -> Self {
        self.channel_scales = scales;
        self
    }

    pub fn with_outliers(mut self, outliers: Vec<(usize, f64)>) -> Self {
        self.outliers = outliers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho {} outside [0, 1)", self.rho)));
        }
        if self.head_dim == 0 {
            return Err(Error::InvalidConfig("head_dim must be at least 1".into()));
        }
        if !self.channel_scales.is_empty() {
            if self.channel_scales.len() != self.head_dim {
                return Err(Error::InvalidConfig(format!(
                    "{} channel scales for head_dim {}",
                    self.channel_scales.len(),
                    self.head_dim
                )));
            }
            if self.channel_scales.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::InvalidConfig("channel scales must be positive".into()));
            }
        }
        if let Some(&(p, _)) = self.outliers.iter().find(|(p, _)| *p >= self.n_tokens) {
            return Err(Error::InvalidConfig(format!("outlier position {p} beyond stream")));
        }
        Ok(())
    }
}

fn ar1_matrix(rng: &mut ChaCha8Rng, spec: &StreamSpec, boost: &[f64]) -> Matrix {
    let d = spec.head_dim;
    let innovation = (1.0 - spec.rho * spec.rho).sqrt();
    let mut state = vec![0.0f64; d];
    let mut data = Vec::with_capacity(spec.n_tokens * d);
    for t in 0..spec.n_tokens {
        for (c, x) in state.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = if t == 0 { boost[t] * z } else { spec.rho * *x + innovation * boost[t] * z };
            let scale = spec.channel_scales.get(c).copied().unwrap_or(1.0);
            data.push(scale * *x);
        }
    }
    Matrix::new(spec.n_tokens, d, data).expect("stream shape")
}

/// Per-head `(K, V)` matrices. Deterministic in `spec.seed`.
pub fn gen_stream(spec: &StreamSpec) -> Result<Vec<(Matrix, Matrix)>> {
    spec.validate()?;
    let mut boost = vec![1.0; spec.n_tokens];
    for &(p, magnitude) in &spec.outliers {
        boost[p] = magnitude;
    }
    // Channel scaling is applied after the draw so it never changes the noise sequence.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.kv_heads)
        .map(|_| {
            let k = ar1_matrix(&mut rng, spec, &boost);
            let v = ar1_matrix(&mut rng, spec, &boost);
            (k, v)
        })
        .collect())
}

/// The generated stream as a raw layer-0 cache.
pub fn gen_layer(spec: &StreamSpec) -> Result<LayerCache> {
    let heads = gen_stream(spec)?
        .into_iter()
        .map(|(k, v)| HeadCache::from_raw(k, v))
        .collect::<Result<Vec<_>>>()?;
    LayerCache::new(0, heads)
}

/// `count` outlier positions spread round-robin over the compressible partitions.
pub fn outlier_positions(layout: &PartitionLayout, count: usize, seed: u64) -> Vec<usize> {
    if layout.partitions.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0u64.rotate_left(17));
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    let mut i = 0;
    while picked.len() < count && i < count * 64 {
        let part = &layout.partitions[i % layout.partitions.len()];
        let p = rng.random_range(part.clone());
        if !picked.contains(&p) {
            picked.push(p);
        }
        i += 1;
    }
    picked.sort_unstable();
    picked
}

/// `softmax(q K^T / sqrt(d_h)) V` over the rows resident in `cache`.
pub fn toy_attention(cache: &HeadCache, query: &[f64]) -> Result<Vec<f64>> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    if query.len() != cache.head_dim() {
        return Err(Error::ShapeMismatch(format!(
            "query has {} channels, cache has {}",
            query.len(),
            cache.head_dim()
        )));
    }
    let scale = 1.0 / (cache.head_dim() as f64).sqrt();
    let logits: Vec<f64> = cache
        .k()
        .row_iter()
        .map(|k| k.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() * scale)
        .collect();
    let weights = softmax(&logits);
    let mut out = vec![0.0; cache.head_dim()];
    for (w, v) in weights.iter().zip(cache.v().row_iter()) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityReport {
    /// Cosine similarity of the concatenated head outputs, one per query.
    pub cosine: Vec<f64>,
    /// Largest absolute output difference, one per query.
    pub max_abs_deviation: Vec<f64>,
    pub retained_fraction: f64,
}

impl FidelityReport {
    pub fn mean_cosine(&self) -> f64 {
        if self.cosine.is_empty() {
            return 1.0;
        }
        self.cosine.iter().sum::<f64>() / self.cosine.len() as f64
    }

    pub fn min_cosine(&self) -> f64 {
        self.cosine.iter().copied().fold(1.0, f64::min)
    }

    pub fn max_deviation(&self) -> f64 {
        self.max_abs_deviation.iter().copied().fold(0.0, f64::max)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Compares attention outputs of two caches with identical layer/head structure
/// under `n_queries` seeded Gaussian queries. Each query probes every head of every
/// layer; the per-query vector is the concatenation of all outputs.
pub fn fidelity_between(
    full: &[LayerCache],
    compressed: &[LayerCache],
    n_queries: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if full.len() != compressed.len()
        || full.iter().zip(compressed).any(|(a, b)| a.num_heads() != b.num_heads())
    {
        return Err(Error::ShapeMismatch("full and compressed caches differ in structure".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00a7_7e17_10f1_u64);
    let mut report = FidelityReport { cosine: Vec::new(), max_abs_deviation: Vec::new(), retained_fraction: 1.0 };
    let raw: usize = full.iter().map(|l| l.seq_len() * l.num_heads()).sum();
    let kept: usize = compressed.iter().map(|l| l.seq_len() * l.num_heads()).sum();
    if raw > 0 {
        report.retained_fraction = kept as f64 / raw as f64;
    }
    for _ in 0..n_queries {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (lf, lc) in full.iter().zip(compressed) {
            for (hf, hc) in lf.heads.iter().zip(&lc.heads) {
                let q: Vec<f64> = (0..hf.head_dim()).map(|_| rng.sample(StandardNormal)).collect();
                if hf.is_empty() {
                    continue;
                }
                a.extend(toy_attention(hf, &q)?);
                b.extend(toy_attention(hc, &q)?);
            }
        }
        report.cosine.push(cosine(&a, &b));
        report
            .max_abs_deviation
            .push(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    Ok(report)
}

/// Everything measured from one generated stream under one config.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub metrics: MetricsReport,
    pub fidelity: FidelityReport,
    /// `None` when the spec injects no outliers.
    pub outlier_retention: Option<f64>,
}

/// Generates the stream, compresses it one-shot, and measures fidelity and
/// outlier retention against the full cache.
pub fn evaluate(spec: &StreamSpec, cfg: &CompressorConfig, n_queries: usize) -> Result<SimOutcome> {
    let full = vec![gen_layer(spec)?];
    let (compressed, metrics) = run_compression(full.clone(), cfg, Mode::Oneshot)?;
    let fidelity = fidelity_between(&full, &compressed, n_queries, spec.seed)?;
    let outlier_retention = (!spec.outliers.is_empty()).then(|| {
        let layer = &compressed[0];
        let hits: usize = layer
            .heads
            .iter()
            .map(|h| spec.outliers.iter().filter(|(p, _)| h.positions().binary_search(p).is_ok()).count())
            .sum();
        hits as f64 / (spec.outliers.len() * layer.num_heads()) as f64
    });
    Ok(SimOutcome { metrics, fidelity, outlier_retention })
}

/// Generates the stream, compresses it, and measures attention fidelity.
pub fn fidelity_eval(spec: &StreamSpec, cfg: &CompressorConfig, n_queries: usize) -> Result<FidelityReport> {
    let layout = partition_layout(spec.n_tokens, cfg.sink, cfg.lag);
    if layout.partitions.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} tokens leave no compressible partition for S={} L={}",
            spec.n_tokens, cfg.sink, cfg.lag
        )));
    }
    Ok(evaluate(spec, cfg, n_queries)?.fidelity)
}

/// Fraction of `(outlier position, head)` pairs still resident after compression.
pub fn outlier_retention_rate(spec: &StreamSpec, cfg: &CompressorConfig) -> Result<f64> {
    if spec.outliers.is_empty() {
        return Err(Error::InvalidConfig("no outliers to track".into()));
    }
    Ok(evaluate(spec, cfg, 0)?.outlier_retention.unwrap_or(0.0))
}
