use std::fs;
use std::path::Path;

use lagkv::kv_model::{decode_kvd, encode_kvd, partition_layout};
use lagkv::numerics::top_k_indices;
use lagkv::scoring::{score_chunk, ChunkPair};
use lagkv::sim::{evaluate, fidelity_between, outlier_positions, StreamSpec};
use lagkv::{compression_ratio, retained_length, run_compression, LayerCache, Strategy};
use rayon::prelude::*;

use crate::config::{RunConfig, SWEEP_LAGS, SWEEP_RATIOS};
use crate::error::CliError;

fn read_kvd(path: &Path) -> Result<Vec<LayerCache>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(decode_kvd(&bytes)?)
}

fn required<'a>(value: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::Config(format!("no {what} path given")))
}

/// Compresses `input` into `output`; returns the per-layer metrics as JSON lines.
pub fn cmd_compress(cfg: &RunConfig) -> Result<String, CliError> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let compressor = cfg.single_compressor()?;
    let caches = read_kvd(input)?;
    let (compressed, report) = run_compression(caches, &compressor, cfg.mode)?;
    let bytes = encode_kvd(&compressed)?;
    fs::write(output, bytes).map_err(|e| CliError::Io(format!("{}: {e}", output.display())))?;
    Ok(report.to_json_lines())
}

pub const SWEEP_HEADER: [&str; 10] = [
    "lag",
    "ratio",
    "strategy",
    "seed",
    "achieved_ratio",
    "retained",
    "mean_cosine",
    "min_cosine",
    "max_abs_deviation",
    "outlier_retention",
];

struct SweepRow {
    lag: usize,
    ratio: f64,
    strategy: Strategy,
    seed: u64,
    achieved_ratio: f64,
    retained: usize,
    mean_cosine: f64,
    min_cosine: f64,
    max_abs_deviation: f64,
    outlier_retention: Option<f64>,
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.lag.to_string(),
            self.ratio.to_string(),
            self.strategy.to_string(),
            self.seed.to_string(),
            self.achieved_ratio.to_string(),
            self.retained.to_string(),
            self.mean_cosine.to_string(),
            self.min_cosine.to_string(),
            self.max_abs_deviation.to_string(),
            self.outlier_retention.map(|x| x.to_string()).unwrap_or_default(),
        ]
    }
}

fn sweep_generated(cfg: &RunConfig, lag: usize, ratio: f64, strategy: Strategy, seed: u64) -> Result<SweepRow, CliError> {
    let mut compressor = cfg.compressor(lag, ratio, strategy)?;
    // A generated stream is a single layer with no depth; skip lists only apply when
    // configured explicitly.
    if cfg.skip_layers.is_none() {
        compressor.skip_layers.clear();
    }
    let layout = partition_layout(cfg.n_tokens, cfg.sink, lag);
    let outliers = outlier_positions(&layout, cfg.outliers, seed)
        .into_iter()
        .map(|p| (p, cfg.outlier_magnitude))
        .collect();
    let spec = StreamSpec::new(seed, cfg.n_tokens, cfg.head_dim, cfg.kv_heads, cfg.rho).with_outliers(outliers);
    let outcome = evaluate(&spec, &compressor, cfg.queries)?;
    let layer = &outcome.metrics.layers[0];
    Ok(SweepRow {
        lag,
        ratio,
        strategy,
        seed,
        achieved_ratio: layer.achieved_ratio,
        retained: layer.retained_length,
        mean_cosine: outcome.fidelity.mean_cosine(),
        min_cosine: outcome.fidelity.min_cosine(),
        max_abs_deviation: outcome.fidelity.max_deviation(),
        outlier_retention: outcome.outlier_retention,
    })
}

fn sweep_dump(
    cfg: &RunConfig,
    caches: &[LayerCache],
    lag: usize,
    ratio: f64,
    strategy: Strategy,
    seed: u64,
) -> Result<SweepRow, CliError> {
    let compressor = cfg.compressor(lag, ratio, strategy)?;
    let (compressed, report) = run_compression(caches.to_vec(), &compressor, cfg.mode)?;
    let fidelity = fidelity_between(caches, &compressed, cfg.queries, seed)?;
    let raw: usize = report.layers.iter().map(|l| l.raw_length).sum();
    let retained: usize = report.layers.iter().map(|l| l.retained_length).sum();
    Ok(SweepRow {
        lag,
        ratio,
        strategy,
        seed,
        achieved_ratio: if raw == 0 { 0.0 } else { 1.0 - retained as f64 / raw as f64 },
        retained,
        mean_cosine: fidelity.mean_cosine(),
        min_cosine: fidelity.min_cosine(),
        max_abs_deviation: fidelity.max_deviation(),
        outlier_retention: None,
    })
}

/// One CSV row per (lag, ratio, strategy, seed), in that nesting order.
///
/// Without an `input` dump, each row compresses a generated AR(1) stream.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let lags = cfg.lags_or_default(&SWEEP_LAGS);
    let ratios = cfg.ratios_or_default(&SWEEP_RATIOS);
    let mut grid = Vec::new();
    for &lag in &lags {
        for &ratio in &ratios {
            for &strategy in &cfg.strategies {
                for &seed in &cfg.seeds {
                    // Fail fast on invalid combinations before any work is spent.
                    cfg.compressor(lag, ratio, strategy)?;
                    grid.push((lag, ratio, strategy, seed));
                }
            }
        }
    }
    let dump = cfg.input.as_deref().map(read_kvd).transpose()?;
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(lag, ratio, strategy, seed)| match &dump {
            Some(caches) => sweep_dump(cfg, caches, lag, ratio, strategy, seed),
            None => sweep_generated(cfg, lag, ratio, strategy, seed),
        })
        .collect::<Result<_, _>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for row in &rows {
        w.write_record(row.record()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-token score breakdown for one compressible partition of one head.
pub fn cmd_scores(cfg: &RunConfig, layer: usize, head: usize, partition: usize) -> Result<String, CliError> {
    let input = required(&cfg.input, "input")?;
    let compressor = cfg.single_compressor()?;
    let caches = read_kvd(input)?;
    let layer_cache = caches
        .get(layer)
        .ok_or_else(|| CliError::Config(format!("layer {layer} out of range ({} layers)", caches.len())))?;
    let head_cache = layer_cache
        .heads
        .get(head)
        .ok_or_else(|| CliError::Config(format!("head {head} out of range ({} heads)", layer_cache.num_heads())))?;
    let layout = partition_layout(head_cache.len(), compressor.sink, compressor.lag);
    let part = layout.partitions.get(partition).cloned().ok_or_else(|| {
        CliError::Config(format!(
            "partition {partition} out of range ({} compressible partitions)",
            layout.partitions.len()
        ))
    })?;
    let reference = layout.reference_for(partition);
    let slice = |r: &std::ops::Range<usize>| -> Result<ChunkPair, CliError> {
        let rows = head_cache
            .resident_rows(r.start, r.end)
            .ok_or_else(|| CliError::Kvd(format!("positions {}..{} are not raw in the dump", r.start, r.end)))?;
        Ok(ChunkPair::new(
            head_cache.k().slice_rows(rows.start, rows.end),
            head_cache.v().slice_rows(rows.start, rows.end),
        )?)
    };
    let chunk = slice(&part)?;
    let reference = slice(&reference)?;
    let scores = score_chunk(compressor.strategy, &chunk, &reference, compressor.eps)?;
    let kept = top_k_indices(&scores.total, compressor.keep_per_partition())?;

    let mut out = String::from("position,key_score,value_score,total,kept\n");
    for (i, position) in part.enumerate() {
        let flag = kept.binary_search(&i).is_ok() as u8;
        out.push_str(&format!(
            "{position},{},{},{},{flag}\n",
            scores.key[i], scores.value[i], scores.total[i]
        ));
    }
    Ok(out)
}

/// `L_R=<retained> C=<ratio>` with C to four decimals.
pub fn cmd_ratio(seq_len: usize, sink: usize, lag: usize, ratio: f64) -> Result<String, CliError> {
    if lag == 0 {
        return Err(CliError::Config("lag size must be at least 1".into()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(CliError::Config(format!("ratio {ratio} outside (0, 1]")));
    }
    let c = compression_ratio(seq_len, sink, lag, ratio)?;
    Ok(format!("L_R={} C={c:.4}", retained_length(seq_len, sink, lag, ratio)))
}
