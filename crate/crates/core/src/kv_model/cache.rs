use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// K and V rows of one KV head, tagged with the original token positions they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCache {
    k: Matrix,
    v: Matrix,
    positions: Vec<usize>,
}

impl HeadCache {
    pub fn new(k: Matrix, v: Matrix, positions: Vec<usize>) -> Result<Self> {
        if k.rows() != v.rows() || k.cols() != v.cols() {
            return Err(Error::ShapeMismatch(format!(
                "K is {}x{} but V is {}x{}",
                k.rows(),
                k.cols(),
                v.rows(),
                v.cols()
            )));
        }
        if positions.len() != k.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions for {} rows",
                positions.len(),
                k.rows()
            )));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ShapeMismatch("positions must be strictly increasing".into()));
        }
        Ok(Self { k, v, positions })
    }

    /// Uncompressed cache: positions are `0..k.rows()`.
    pub fn from_raw(k: Matrix, v: Matrix) -> Result<Self> {
        let positions = (0..k.rows()).collect();
        Self::new(k, v, positions)
    }

    pub fn empty(head_dim: usize) -> Self {
        Self { k: Matrix::empty(head_dim), v: Matrix::empty(head_dim), positions: Vec::new() }
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn head_dim(&self) -> usize {
        self.k.cols()
    }

    /// Appends one token. `position` must exceed every resident position.
    pub fn push(&mut self, k_row: &[f64], v_row: &[f64], position: usize) -> Result<()> {
        if let Some(&last) = self.positions.last() {
            if position <= last {
                return Err(Error::ShapeMismatch(format!(
                    "position {position} does not follow {last}"
                )));
            }
        }
        if k_row.len() != self.head_dim() || v_row.len() != self.head_dim() {
            return Err(Error::ShapeMismatch(format!(
                "token rows have {}/{} channels, cache has {}",
                k_row.len(),
                v_row.len(),
                self.head_dim()
            )));
        }
        self.k.push_row(k_row)?;
        self.v.push_row(v_row)?;
        self.positions.push(position);
        Ok(())
    }

    /// Row index range holding exactly the original positions `start..end`, if all of them
    /// are resident and contiguous.
    pub fn resident_rows(&self, start: usize, end: usize) -> Option<std::ops::Range<usize>> {
        if start > end {
            return None;
        }
        let first = self.positions.partition_point(|&p| p < start);
        let last = first + (end - start);
        if last > self.positions.len() {
            return None;
        }
        let contiguous = self.positions[first..last]
            .iter()
            .zip(start..end)
            .all(|(&p, want)| p == want);
        contiguous.then_some(first..last)
    }

    /// Drops every row whose index is not listed in `keep_rows` (sorted ascending).
    pub(crate) fn retain_row_indices(&mut self, keep_rows: &[usize]) {
        let mut mask = vec![false; self.len()];
        for &i in keep_rows {
            mask[i] = true;
        }
        self.k.retain_rows(|i| mask[i]);
        self.v.retain_rows(|i| mask[i]);
        let mut idx = 0;
        self.positions.retain(|_| {
            let keep = mask[idx];
            idx += 1;
            keep
        });
    }
}

/// One transformer layer's cache: one `HeadCache` per KV head.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub layer_index: usize,
    pub heads: Vec<HeadCache>,
}

impl LayerCache {
    pub fn new(layer_index: usize, heads: Vec<HeadCache>) -> Result<Self> {
        if let Some(first) = heads.first() {
            for (h, head) in heads.iter().enumerate() {
                if head.head_dim() != first.head_dim() || head.len() != first.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "head {h} is {}x{}, head 0 is {}x{}",
                        head.len(),
                        head.head_dim(),
                        first.len(),
                        first.head_dim()
                    )));
                }
            }
        }
        Ok(Self { layer_index, heads })
    }

    /// Sequence length shared by every head (0 for a head-less layer).
    pub fn seq_len(&self) -> usize {
        self.heads.first().map_or(0, HeadCache::len)
    }

    pub fn head_dim(&self) -> Option<usize> {
        self.heads.first().map(HeadCache::head_dim)
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }
}
