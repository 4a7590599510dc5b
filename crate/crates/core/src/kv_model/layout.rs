use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

/// Decomposition of a raw sequence into attention sink, compressible lag partitions,
/// and the always-kept sliding window (last full partition plus the remainder).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionLayout {
    pub sink: Range<usize>,
    pub partitions: Vec<Range<usize>>,
    pub window_tail: Range<usize>,
}

impl PartitionLayout {
    /// Reference range for compressible partition `index`: the next `lag` raw tokens.
    pub fn reference_for(&self, index: usize) -> Range<usize> {
        let part = &self.partitions[index];
        let width = part.end - part.start;
        part.end..part.end + width
    }
}

/// True when a sequence of `seq_len` raw tokens has at least one compressible partition.
pub fn is_compressible(seq_len: usize, sink: usize, lag: usize) -> bool {
    seq_len > sink.saturating_add(lag.saturating_mul(2))
}

pub fn partition_layout(seq_len: usize, sink: usize, lag: usize) -> PartitionLayout {
    assert!(lag >= 1, "lag size must be at least 1");
    let sink_end = sink.min(seq_len);
    if !is_compressible(seq_len, sink, lag) {
        return PartitionLayout {
            sink: 0..sink_end,
            partitions: Vec::new(),
            window_tail: sink_end..seq_len,
        };
    }
    let count = (seq_len - sink) / lag - 1;
    let partitions = (0..count)
        .map(|p| sink + p * lag..sink + (p + 1) * lag)
        .collect();
    PartitionLayout {
        sink: 0..sink,
        partitions,
        window_tail: sink + count * lag..seq_len,
    }
}

/// `floor(ratio * lag)`, clamped to `lag`.
///
/// A relative slack of 1e-9 absorbs binary rounding of products such as `0.29 * 100`.
pub fn keep_count(lag: usize, ratio: f64) -> usize {
    let exact = ratio * lag as f64;
    let k = (exact + exact.abs() * 1e-9).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(lag)
    }
}

/// Closed-form cache length after compressing `seq_len` raw tokens.
pub fn retained_length(seq_len: usize, sink: usize, lag: usize, ratio: f64) -> usize {
    if !is_compressible(seq_len, sink, lag) {
        return seq_len;
    }
    let tail = seq_len - sink;
    sink + keep_count(lag, ratio) * (tail / lag - 1) + lag + tail % lag
}

/// `1 - retained_length / seq_len`.
pub fn compression_ratio(seq_len: usize, sink: usize, lag: usize, ratio: f64) -> Result<f64> {
    if seq_len == 0 {
        return Err(Error::EmptySequence);
    }
    Ok(1.0 - retained_length(seq_len, sink, lag, ratio) as f64 / seq_len as f64)
}
