use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::check_shape;

/// Binary sparsity pattern `I_𝒦` on an `m×n` gain.
///
/// The feasible subspace is `𝒦 = {F : F ∘ I_𝒦 = F}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMask {
    pattern: DMatrix<f64>,
}

impl StructureMask {
    /// Entries must be exactly `0.0` or `1.0`.
    pub fn new(pattern: DMatrix<f64>) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::InvalidArgument("structure mask is empty".into()));
        }
        if let Some(bad) = pattern.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "structure mask entries must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self { pattern })
    }

    /// Builds a mask from row-major boolean rows.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("structure mask rows must be non-empty and of equal length".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| f64::from(u8::from(rows[i][j]))))
    }

    /// The unstructured mask (every entry free).
    pub fn full(m: usize, n: usize) -> Self {
        Self {
            pattern: DMatrix::from_element(m, n, 1.0),
        }
    }

    pub fn pattern(&self) -> &DMatrix<f64> {
        &self.pattern
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pattern.shape()
    }

    /// `Π_𝒦(F) = F ∘ I_𝒦`.
    pub fn project(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, n) = self.shape();
        check_shape("gain F", f, m, n)?;
        Ok(f.component_mul(&self.pattern))
    }

    /// Exact membership test `F ∘ I_𝒦 = F`.
    pub fn contains(&self, f: &DMatrix<f64>) -> bool {
        f.shape() == self.shape()
            && f.iter()
                .zip(self.pattern.iter())
                .all(|(&v, &keep)| keep == 1.0 || v == 0.0)
    }
}

pub fn project_structure(f: &DMatrix<f64>, mask: &StructureMask) -> Result<DMatrix<f64>> {
    mask.project(f)
}
