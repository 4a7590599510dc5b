//! Attention-free KV-cache compression.
//!
//! The cache after the attention sink is cut into lag partitions of `L` tokens.
//! Each partition is min-max normalized per channel against the partition that
//! follows it, each token's channel spread is softmaxed into an importance score,
//! and the top `floor(r * L)` tokens per head survive. The last full partition and
//! any remainder form a sliding window that is never evicted.

pub mod compressor;
pub mod error;
pub mod kv_model;
pub mod numerics;
pub mod scoring;
pub mod sim;

pub use compressor::{
    compress_layer_partition, compress_partition, compress_prefill, run_compression, step_decode,
    CompressionEvent, CompressionState, LayerMetrics, MetricsReport, Mode, ScoreSummary,
};
pub use error::{Error, Result};
pub use kv_model::{
    compression_ratio, partition_layout, retained_length, CompressorConfig, HeadCache, LayerCache,
    PartitionLayout, Strategy,
};
pub use numerics::Matrix;
