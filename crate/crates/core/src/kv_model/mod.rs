//! Cache structures, partition geometry and the KVD dump format.

mod cache;
mod config;
pub mod kvd;
mod layout;

pub use cache::{HeadCache, LayerCache};
pub use config::{CompressorConfig, Strategy};
pub use kvd::{decode_kvd, encode_kvd, load_kvd, save_kvd};
pub use layout::{compression_ratio, keep_count, partition_layout, retained_length, PartitionLayout};
