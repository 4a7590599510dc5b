//! Outlier retention of each strategy on AR(1) streams, averaged over seeds.
//!
//! cargo run --release -p lagkv --example outlier_calibration

use lagkv::kv_model::partition_layout;
use lagkv::sim::{outlier_positions, outlier_retention_rate, StreamSpec};
use lagkv::{CompressorConfig, Strategy};

fn main() -> lagkv::Result<()> {
    let (sink, lag, head_dim, heads, rho, magnitude, seeds) = (16, 128, 32, 2, 0.9, 10.0, 20u64);
    let n_tokens = sink + lag * 10;
    let layout = partition_layout(n_tokens, sink, lag);
    println!("strategy,r,magnitude,retention");
    for magnitude in [1.0, 3.0, magnitude] {
        for strategy in Strategy::ALL {
            for ratio in [0.5, 0.25, 0.167, 0.125] {
                let cfg = CompressorConfig::new(sink, lag, ratio, strategy).with_skip_layers([]);
                let mut total = 0.0;
                for seed in 0..seeds {
                    let outliers =
                        outlier_positions(&layout, 8, seed).into_iter().map(|p| (p, magnitude)).collect();
                    let spec = StreamSpec::new(seed, n_tokens, head_dim, heads, rho).with_outliers(outliers);
                    total += outlier_retention_rate(&spec, &cfg)?;
                }
                println!("{strategy},{ratio},{magnitude},{:.4}", total / seeds as f64);
            }
        }
    }
    Ok(())
}
