//! Recursive partition-by-partition eviction, after prefill and during decode.
//!
//! Partition `p` is always scored against the raw rows of partition `p + 1`, and
//! eviction inside `p` never touches `p + 1`. Compressing left to right therefore
//! sees the same inputs whether the whole prompt is available at once or tokens
//! arrive one at a time, so both modes keep the same positions.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kv_model::{partition_layout, CompressorConfig, HeadCache, LayerCache, Strategy};
use crate::numerics::top_k_indices;
use crate::scoring::{score_chunk, ChunkPair, ScoreVector};

/// Running min/max/mean of every total score computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl ScoreSummary {
    pub fn observe(&mut self, scores: &[f64]) {
        for &s in scores {
            if self.count == 0 {
                self.min = s;
                self.max = s;
            } else {
                self.min = self.min.min(s);
                self.max = self.max.max(s);
            }
            self.sum += s;
            self.count += 1;
        }
    }

    pub fn merge(&mut self, other: &ScoreSummary) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// One partition compressed in one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionEvent {
    pub layer: usize,
    /// Original positions that were scored.
    pub partition: Range<usize>,
    /// Per head: original positions retained from `partition`, ascending.
    pub kept_positions: Vec<Vec<usize>>,
    #[serde(skip)]
    pub scores: ScoreSummary,
}

/// Where the decode driver stands for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressionState {
    /// Raw positions below this are either sink or already compressed.
    pub raw_consumed: usize,
    /// Raw tokens appended so far.
    pub raw_total: usize,
    compressed_any: bool,
}

impl CompressionState {
    pub fn new(cfg: &CompressorConfig) -> Self {
        Self { raw_consumed: cfg.sink, raw_total: 0, compressed_any: false }
    }

    /// State matching a raw prompt of `seq_len` tokens after [`compress_prefill`].
    pub fn after_prefill(seq_len: usize, cfg: &CompressorConfig) -> Self {
        let compressed = partition_layout(seq_len, cfg.sink, cfg.lag).partitions.len();
        Self {
            raw_consumed: cfg.sink + compressed * cfg.lag,
            raw_total: seq_len,
            compressed_any: compressed > 0,
        }
    }

    pub fn uncompressed_span(&self) -> usize {
        self.raw_total.saturating_sub(self.raw_consumed)
    }

    /// Next partition is due once `2L` raw tokens sit past the consumed boundary.
    /// Before the first compression the span must exceed `2L`, since a sequence of
    /// exactly `S + 2L` tokens is left untouched.
    fn due(&self, lag: usize) -> bool {
        let span = self.uncompressed_span();
        span > 2 * lag || (self.compressed_any && span == 2 * lag)
    }
}

struct HeadSelection {
    part_rows: Range<usize>,
    keep: Vec<usize>,
    scores: ScoreVector,
}

fn resident(head: &HeadCache, range: &Range<usize>) -> Result<Range<usize>> {
    head.resident_rows(range.start, range.end)
        .ok_or(Error::StaleRange { start: range.start, end: range.end })
}

fn select(
    head: &HeadCache,
    part: &Range<usize>,
    reference: &Range<usize>,
    cfg: &CompressorConfig,
) -> Result<HeadSelection> {
    let part_rows = resident(head, part)?;
    let ref_rows = resident(head, reference)?;
    let chunk = ChunkPair::new(
        head.k().slice_rows(part_rows.start, part_rows.end),
        head.v().slice_rows(part_rows.start, part_rows.end),
    )?;
    let reference = if cfg.strategy == Strategy::Lag {
        ChunkPair::new(
            head.k().slice_rows(ref_rows.start, ref_rows.end),
            head.v().slice_rows(ref_rows.start, ref_rows.end),
        )?
    } else {
        chunk.clone()
    };
    let scores = score_chunk(cfg.strategy, &chunk, &reference, cfg.eps)?;
    let k = cfg.keep_per_partition().min(chunk.rows());
    let keep = top_k_indices(&scores.total, k)?;
    Ok(HeadSelection { part_rows, keep, scores })
}

fn evict(head: &mut HeadCache, sel: &HeadSelection) -> Vec<usize> {
    let Range { start, end } = sel.part_rows.clone();
    let kept_positions = sel.keep.iter().map(|&i| head.positions()[start + i]).collect();
    let mut rows: Vec<usize> = (0..start).collect();
    rows.extend(sel.keep.iter().map(|&i| start + i));
    rows.extend(end..head.len());
    head.retain_row_indices(&rows);
    kept_positions
}

/// Scores `part` against `reference` in a single head and evicts all but the top
/// `floor(r * L)` tokens of `part`. Returns the kept original positions.
pub fn compress_partition(
    head: &mut HeadCache,
    part: Range<usize>,
    reference: Range<usize>,
    cfg: &CompressorConfig,
) -> Result<Vec<usize>> {
    let sel = select(head, &part, &reference, cfg)?;
    Ok(evict(head, &sel))
}

/// Same as [`compress_partition`] but across every head of `layer`; all heads are
/// scored before any row is removed.
pub fn compress_layer_partition(
    layer: &mut LayerCache,
    part: Range<usize>,
    reference: Range<usize>,
    cfg: &CompressorConfig,
) -> Result<CompressionEvent> {
    let selections = layer
        .heads
        .iter()
        .map(|head| select(head, &part, &reference, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = ScoreSummary::default();
    let mut kept_positions = Vec::with_capacity(selections.len());
    for (head, sel) in layer.heads.iter_mut().zip(&selections) {
        scores.observe(&sel.scores.total);
        kept_positions.push(evict(head, sel));
    }
    Ok(CompressionEvent { layer: layer.layer_index, partition: part, kept_positions, scores })
}

fn ensure_raw(layer: &LayerCache) -> Result<()> {
    let n = layer.seq_len();
    for head in &layer.heads {
        if head.positions().iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::StaleRange { start: 0, end: n });
        }
    }
    Ok(())
}

/// Compresses a full, uncompressed prompt cache in place.
pub fn compress_prefill(layer: &mut LayerCache, cfg: &CompressorConfig) -> Result<Vec<CompressionEvent>> {
    cfg.validate()?;
    if cfg.skips(layer.layer_index) {
        return Ok(Vec::new());
    }
    ensure_raw(layer)?;
    let layout = partition_layout(layer.seq_len(), cfg.sink, cfg.lag);
    (0..layout.partitions.len())
        .map(|p| {
            compress_layer_partition(layer, layout.partitions[p].clone(), layout.reference_for(p), cfg)
        })
        .collect()
}

/// Appends one decoded token to every head, then compresses the oldest uncompressed
/// partition if one became due. At most one event per call.
pub fn step_decode(
    state: &mut CompressionState,
    layer: &mut LayerCache,
    new_k: &[&[f64]],
    new_v: &[&[f64]],
    cfg: &CompressorConfig,
) -> Result<Option<CompressionEvent>> {
    if new_k.len() != layer.num_heads() || new_v.len() != layer.num_heads() {
        return Err(Error::ShapeMismatch(format!(
            "{} K rows and {} V rows for {} heads",
            new_k.len(),
            new_v.len(),
            layer.num_heads()
        )));
    }
    let position = state.raw_total;
    for ((head, k), v) in layer.heads.iter_mut().zip(new_k).zip(new_v) {
        head.push(k, v, position)?;
    }
    state.raw_total += 1;

    if cfg.skips(layer.layer_index) || !state.due(cfg.lag) {
        return Ok(None);
    }
    let start = state.raw_consumed;
    let event =
        compress_layer_partition(layer, start..start + cfg.lag, start + cfg.lag..start + 2 * cfg.lag, cfg)?;
    state.raw_consumed += cfg.lag;
    state.compressed_any = true;
    Ok(Some(event))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Compress the full prompt after prefill.
    Oneshot,
    /// Prefill up to `S + 2L` tokens, then feed the rest through [`step_decode`].
    Incremental,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Oneshot => "oneshot",
            Mode::Incremental => "incremental",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "oneshot" => Ok(Mode::Oneshot),
            "incremental" => Ok(Mode::Incremental),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMetrics {
    pub layer: usize,
    pub raw_length: usize,
    pub retained_length: usize,
    pub achieved_ratio: f64,
    pub events: usize,
    pub strategy: Strategy,
    pub mode: Mode,
    pub skipped: bool,
    pub score_min: Option<f64>,
    pub score_max: Option<f64>,
    pub score_mean: Option<f64>,
    /// Per head: every retained original position after compression.
    #[serde(skip)]
    pub kept_positions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub layers: Vec<LayerMetrics>,
}

impl MetricsReport {
    /// One JSON object per layer, newline-terminated.
    pub fn to_json_lines(&self) -> String {
        self.layers
            .iter()
            .map(|l| serde_json::to_string(l).expect("metrics serialize") + "\n")
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

fn replay_incremental(layer: &LayerCache, cfg: &CompressorConfig) -> Result<(LayerCache, Vec<CompressionEvent>)> {
    ensure_raw(layer)?;
    let n = layer.seq_len();
    let prefill = n.min(cfg.sink + 2 * cfg.lag);
    let heads = layer
        .heads
        .iter()
        .map(|h| {
            HeadCache::from_raw(h.k().slice_rows(0, prefill), h.v().slice_rows(0, prefill))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = LayerCache::new(layer.layer_index, heads)?;
    let mut events = compress_prefill(&mut out, cfg)?;
    let mut state = CompressionState::after_prefill(prefill, cfg);
    for t in prefill..n {
        let ks: Vec<&[f64]> = layer.heads.iter().map(|h| h.k().row(t)).collect();
        let vs: Vec<&[f64]> = layer.heads.iter().map(|h| h.v().row(t)).collect();
        events.extend(step_decode(&mut state, &mut out, &ks, &vs, cfg)?);
    }
    Ok((out, events))
}

/// Compresses every layer of a raw cache dump.
pub fn run_compression(
    caches: Vec<LayerCache>,
    cfg: &CompressorConfig,
    mode: Mode,
) -> Result<(Vec<LayerCache>, MetricsReport)> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(caches.len());
    let mut report = MetricsReport::default();
    for mut layer in caches {
        let raw_length = layer.seq_len();
        let events = match mode {
            Mode::Oneshot => compress_prefill(&mut layer, cfg)?,
            Mode::Incremental => {
                let (compressed, events) = replay_incremental(&layer, cfg)?;
                layer = compressed;
                events
            }
        };
        let mut scores = ScoreSummary::default();
        for e in &events {
            scores.merge(&e.scores);
        }
        let retained_length = layer.seq_len();
        let achieved_ratio =
            if raw_length == 0 { 0.0 } else { 1.0 - retained_length as f64 / raw_length as f64 };
        report.layers.push(LayerMetrics {
            layer: layer.layer_index,
            raw_length,
            retained_length,
            achieved_ratio,
            events: events.len(),
            strategy: cfg.strategy,
            mode,
            skipped: cfg.skips(layer.layer_index),
            score_min: (scores.count > 0).then_some(scores.min),
            score_max: (scores.count > 0).then_some(scores.max),
            score_mean: scores.mean(),
            kept_positions: layer.heads.iter().map(|h| h.positions().to_vec()).collect(),
        });
        out.push(layer);
    }
    Ok((out, report))
}
