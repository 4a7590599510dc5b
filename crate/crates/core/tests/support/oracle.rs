//! Straight-line loop implementations used as independent references in tests.
//! Nothing here calls into the library.

#![allow(dead_code)]

pub type Rows = Vec<Vec<f64>>;

/// Lag score for one partition: per-channel min/max from `reference`, range floored
/// at `eps`, population std per token, softmax, K part + V part.
pub fn lag_score(chunk_k: &Rows, chunk_v: &Rows, ref_k: &Rows, ref_v: &Rows, eps: f64) -> Vec<f64> {
    let sk = part(chunk_k, ref_k, eps);
    let sv = part(chunk_v, ref_v, eps);
    let mut out = Vec::new();
    for t in 0..sk.len() {
        out.push(sk[t] + sv[t]);
    }
    out
}

pub fn local_score(chunk_k: &Rows, chunk_v: &Rows, eps: f64) -> Vec<f64> {
    lag_score(chunk_k, chunk_v, chunk_k, chunk_v, eps)
}

pub fn part(chunk: &Rows, reference: &Rows, eps: f64) -> Vec<f64> {
    let cols = reference[0].len();
    let mut lo = vec![0.0; cols];
    let mut hi = vec![0.0; cols];
    for c in 0..cols {
        lo[c] = reference[0][c];
        hi[c] = reference[0][c];
        for t in 1..reference.len() {
            if reference[t][c] < lo[c] {
                lo[c] = reference[t][c];
            }
            if reference[t][c] > hi[c] {
                hi[c] = reference[t][c];
            }
        }
    }
    let mut stds = Vec::new();
    for t in 0..chunk.len() {
        let mut normed = vec![0.0; cols];
        for c in 0..cols {
            let mut range = hi[c] - lo[c];
            if range < eps {
                range = eps;
            }
            normed[c] = (chunk[t][c] - lo[c]) / range;
        }
        let mut mean = 0.0;
        for c in 0..cols {
            mean += normed[c];
        }
        mean /= cols as f64;
        let mut var = 0.0;
        for c in 0..cols {
            var += (normed[c] - mean) * (normed[c] - mean);
        }
        stds.push((var / cols as f64).sqrt());
    }
    let mut top = stds[0];
    for &s in &stds {
        if s > top {
            top = s;
        }
    }
    let mut denom = 0.0;
    for &s in &stds {
        denom += (s - top).exp();
    }
    let mut out = Vec::new();
    for &s in &stds {
        out.push((s - top).exp() / denom);
    }
    out
}

pub fn l2_score(chunk_k: &Rows) -> Vec<f64> {
    let mut out = Vec::new();
    for row in chunk_k {
        let mut ss = 0.0;
        for x in row {
            ss += x * x;
        }
        out.push(-ss.sqrt());
    }
    out
}

/// Indices of the k largest scores (ties: smaller index first), ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut out = idx[..k].to_vec();
    out.sort();
    out
}

/// `softmax(q K^T / sqrt(d)) V` with explicit loops.
pub fn attention(k: &Rows, v: &Rows, q: &[f64]) -> Vec<f64> {
    let d = q.len();
    let mut logits = Vec::new();
    for row in k {
        let mut dot = 0.0;
        for c in 0..d {
            dot += row[c] * q[c];
        }
        logits.push(dot / (d as f64).sqrt());
    }
    let mut top = logits[0];
    for &l in &logits {
        if l > top {
            top = l;
        }
    }
    let mut z = 0.0;
    for &l in &logits {
        z += (l - top).exp();
    }
    let mut out = vec![0.0; v[0].len()];
    for t in 0..k.len() {
        let w = (logits[t] - top).exp() / z;
        for c in 0..out.len() {
            out[c] += w * v[t][c];
        }
    }
    out
}

/// Positions retained by one-shot compression of a raw head, computed from the
/// closed-form partitioning with explicit loops.
pub fn kept_positions(
    k: &Rows,
    v: &Rows,
    sink: usize,
    lag: usize,
    keep: usize,
    score: &dyn Fn(&Rows, &Rows, &Rows, &Rows) -> Vec<f64>,
) -> Vec<usize> {
    let n = k.len();
    if n <= sink + 2 * lag {
        return (0..n).collect();
    }
    let parts = (n - sink) / lag - 1;
    let mut kept: Vec<usize> = (0..sink).collect();
    for p in 0..parts {
        let s = sink + p * lag;
        let chunk_k = k[s..s + lag].to_vec();
        let chunk_v = v[s..s + lag].to_vec();
        let ref_k = k[s + lag..s + 2 * lag].to_vec();
        let ref_v = v[s + lag..s + 2 * lag].to_vec();
        let scores = score(&chunk_k, &chunk_v, &ref_k, &ref_v);
        for i in top_k(&scores, keep) {
            kept.push(s + i);
        }
    }
    for t in sink + parts * lag..n {
        kept.push(t);
    }
    kept
}
