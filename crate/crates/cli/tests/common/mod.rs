#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use lagkv::kv_model::save_kvd;
use lagkv::{HeadCache, LayerCache, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn lagkv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagkv"))
        .args(args)
        .env_remove("LAGKV_SEED")
        .output()
        .expect("spawn lagkv")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// f32-representable random matrix so dumps round-trip exactly.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| (rng.random::<f32>() * 2.0 - 1.0) as f64).collect()).unwrap()
}

pub fn random_layers(seed: u64, n_layers: usize, heads: usize, seq: usize, d_h: usize) -> Vec<LayerCache> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_layers)
        .map(|l| {
            let hs = (0..heads)
                .map(|_| {
                    let k = random_matrix(&mut rng, seq, d_h);
                    let v = random_matrix(&mut rng, seq, d_h);
                    HeadCache::from_raw(k, v).unwrap()
                })
                .collect();
            LayerCache::new(l, hs).unwrap()
        })
        .collect()
}

pub fn layer_from_rows(rows: &[Vec<f64>]) -> LayerCache {
    let m = Matrix::from_rows(rows).unwrap();
    LayerCache::new(0, vec![HeadCache::from_raw(m.clone(), m).unwrap()]).unwrap()
}

pub fn write(path: &Path, layers: &[LayerCache]) {
    save_kvd(layers, path).unwrap();
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
