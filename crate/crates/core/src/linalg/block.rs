use nalgebra::{DMatrix, DMatrixView};

use super::symmetrize;
use crate::error::{Error, Result};

/// A symmetric `(n+m)×(n+m)` matrix with a fixed 2×2 block partition.
///
/// Holds the value matrix `P` and the covariance matrix `S`. The views
/// borrow the underlying storage.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSym {
    full: DMatrix<f64>,
    split: usize,
}

impl BlockSym {
    /// Symmetrizes `m` and partitions it after the first `split` rows/columns.
    pub fn new(m: DMatrix<f64>, split: usize) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("block-symmetric matrix", (m.nrows(), m.nrows()), m.shape()));
        }
        if split > m.nrows() {
            return Err(Error::InvalidArgument(format!(
                "block split {split} exceeds dimension {}",
                m.nrows()
            )));
        }
        Ok(Self {
            full: symmetrize(&m),
            split,
        })
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.full
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn m11(&self) -> DMatrixView<'_, f64> {
        self.full.view((0, 0), (self.split, self.split))
    }

    pub fn m12(&self) -> DMatrixView<'_, f64> {
        let m = self.dim() - self.split;
        self.full.view((0, self.split), (self.split, m))
    }

    pub fn m22(&self) -> DMatrixView<'_, f64> {
        let m = self.dim() - self.split;
        self.full.view((self.split, self.split), (m, m))
    }

    pub fn trace_with(&self, weight: &DMatrix<f64>) -> f64 {
        weight.dot(&self.full)
    }
}
