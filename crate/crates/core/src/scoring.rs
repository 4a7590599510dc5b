//! Token-importance scores for one partition of one KV head.
//!
//! The lag score normalizes every channel of a partition by the min-max range of
//! the *following* partition, measures each token's spread across channels, and
//! turns the spreads into a distribution with softmax. Keys and values are scored
//! separately and summed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kv_model::Strategy;
use crate::numerics::{column_min_max, row_std, softmax, Matrix};

/// K and V rows of one partition (or of its reference).
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPair {
    pub k: Matrix,
    pub v: Matrix,
}

impl ChunkPair {
    pub fn new(k: Matrix, v: Matrix) -> Result<Self> {
        if k.rows() != v.rows() || k.cols() != v.cols() {
            return Err(Error::ShapeMismatch(format!(
                "chunk K is {}x{} but V is {}x{}",
                k.rows(),
                k.cols(),
                v.rows(),
                v.cols()
            )));
        }
        Ok(Self { k, v })
    }

    pub fn rows(&self) -> usize {
        self.k.rows()
    }
}

/// Per-token scores, split into key and value contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub strategy: Strategy,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
    pub total: Vec<f64>,
}

impl ScoreVector {
    fn from_parts(strategy: Strategy, key: Vec<f64>, value: Vec<f64>) -> Self {
        let total = key.iter().zip(&value).map(|(a, b)| a + b).collect();
        Self { strategy, key, value, total }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

/// `(chunk - min) / max(max - min, eps)` per channel, statistics taken from `reference`.
pub fn normalize_by_reference(chunk: &Matrix, reference: &Matrix, eps: f64) -> Result<Matrix> {
    if chunk.cols() != reference.cols() {
        return Err(Error::ShapeMismatch(format!(
            "chunk has {} channels, reference has {}",
            chunk.cols(),
            reference.cols()
        )));
    }
    let (mins, maxs) = column_min_max(reference)?;
    let denom: Vec<f64> = mins.iter().zip(&maxs).map(|(lo, hi)| (hi - lo).max(eps)).collect();
    let mut out = chunk.clone();
    out.map_inplace(|_, c, x| (x - mins[c]) / denom[c]);
    Ok(out)
}

fn spread_distribution(chunk: &Matrix, reference: &Matrix, eps: f64) -> Result<Vec<f64>> {
    Ok(softmax(&row_std(&normalize_by_reference(chunk, reference, eps)?)))
}

pub fn lag_score(chunk: &ChunkPair, reference: &ChunkPair, eps: f64) -> Result<ScoreVector> {
    if chunk.k.cols() != reference.k.cols() || chunk.v.cols() != reference.v.cols() {
        return Err(Error::ShapeMismatch("chunk and reference channel counts differ".into()));
    }
    let key = spread_distribution(&chunk.k, &reference.k, eps)?;
    let value = spread_distribution(&chunk.v, &reference.v, eps)?;
    Ok(ScoreVector::from_parts(Strategy::Lag, key, value))
}

/// Lag score with the chunk as its own reference.
pub fn local_score(chunk: &ChunkPair, eps: f64) -> Result<ScoreVector> {
    let mut s = lag_score(chunk, chunk, eps)?;
    s.strategy = Strategy::Local;
    Ok(s)
}

/// Negative Euclidean norm of each key row. Values do not contribute.
pub fn l2_score(chunk_k: &Matrix) -> ScoreVector {
    let key: Vec<f64> = chunk_k
        .row_iter()
        .map(|row| -row.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let value = vec![0.0; key.len()];
    ScoreVector::from_parts(Strategy::L2Norm, key, value)
}

/// Recency ranking: later tokens score higher, so top-k keeps the most recent ones.
pub fn recency_score(len: usize) -> ScoreVector {
    let key: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let value = vec![0.0; len];
    ScoreVector::from_parts(Strategy::WindowOnly, key, value)
}

/// Dispatches on `strategy`. `reference` is only read by [`Strategy::Lag`].
pub fn score_chunk(
    strategy: Strategy,
    chunk: &ChunkPair,
    reference: &ChunkPair,
    eps: f64,
) -> Result<ScoreVector> {
    match strategy {
        Strategy::Lag => lag_score(chunk, reference, eps),
        Strategy::Local => local_score(chunk, eps),
        Strategy::L2Norm => Ok(l2_score(&chunk.k)),
        Strategy::WindowOnly => Ok(recency_score(chunk.rows())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::top_k_indices;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn pair(rows: &[[f64; 2]]) -> ChunkPair {
        ChunkPair::new(m(rows), m(rows)).unwrap()
    }

    #[test]
    fn normalize_hand_example() {
        let out = normalize_by_reference(&m(&[[0.0, 4.0], [1.0, 2.0]]), &m(&[[0.0, 0.0], [2.0, 4.0]]), 1e-6)
            .unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn normalize_guards_constant_channel() {
        let out = normalize_by_reference(&m(&[[1.0, 3.0]]), &m(&[[1.0, 2.0], [5.0, 2.0]]), 1e-6).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        assert!((out.get(0, 1) - 1e6).abs() < 1e-6);
        assert!(out.data().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn normalize_self_is_unit_bounded() {
        let chunk = m(&[[0.3, -2.0], [1.5, 7.0], [0.9, 0.0]]);
        let out = normalize_by_reference(&chunk, &chunk, 1e-6).unwrap();
        assert!(out.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn normalize_rejects_channel_mismatch() {
        let chunk = Matrix::zeros(2, 3);
        assert!(matches!(
            normalize_by_reference(&chunk, &m(&[[0.0, 1.0]]), 1e-6),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn lag_score_hand_example() {
        let s = lag_score(&pair(&[[0.0, 4.0], [1.0, 2.0]]), &pair(&[[0.0, 0.0], [2.0, 4.0]]), 1e-6).unwrap();
        assert!((s.key[0] - 0.6225).abs() < 1e-4 && (s.key[1] - 0.3775).abs() < 1e-4);
        assert!((s.total[0] - 1.2450).abs() < 1e-3);
        assert!((s.total[1] - 0.7550).abs() < 1e-3);
    }

    #[test]
    fn identical_rows_give_uniform_scores() {
        let rows = [[0.2, 0.9]; 4];
        let s = lag_score(&pair(&rows), &pair(&[[0.0, 0.0], [1.0, 1.0]]), 1e-6).unwrap();
        for x in s.total {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn local_score_hand_example() {
        let s = local_score(&pair(&[[0.0, 4.0], [1.0, 2.0]]), 1e-6).unwrap();
        assert_eq!(s.strategy, Strategy::Local);
        assert_eq!(s.total, vec![1.0, 1.0]);
        let single = local_score(&pair(&[[3.0, 1.0]]), 1e-6).unwrap();
        assert_eq!(single.total, vec![2.0]);
    }

    #[test]
    fn local_is_lag_against_itself() {
        let c = pair(&[[0.1, 4.0], [1.0, -2.0], [3.0, 0.5]]);
        assert_eq!(local_score(&c, 1e-6).unwrap().total, lag_score(&c, &c, 1e-6).unwrap().total);
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_score(&m(&[[3.0, 4.0], [0.0, 0.0]])).total, vec![-5.0, 0.0]);
        let zeros = l2_score(&Matrix::zeros(4, 2));
        assert!(zeros.total.iter().all(|&x| x == 0.0));
        assert_eq!(top_k_indices(&zeros.total, 2).unwrap(), vec![0, 1]);

        let k = m(&[[1.0, 2.0], [0.5, 0.1], [4.0, 0.0]]);
        let mut k2 = k.clone();
        k2.map_inplace(|_, _, x| 2.0 * x);
        let (a, b) = (l2_score(&k), l2_score(&k2));
        for (x, y) in a.total.iter().zip(&b.total) {
            assert_eq!(2.0 * x, *y);
        }
        assert_eq!(top_k_indices(&a.total, 2).unwrap(), top_k_indices(&b.total, 2).unwrap());
    }

    #[test]
    fn recency_prefers_latest() {
        let s = recency_score(4);
        assert_eq!(top_k_indices(&s.total, 2).unwrap(), vec![2, 3]);
    }
}
