use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Matrix-valued affine function `C + Σ_k x_k A_k` of the scalar decision
/// variables.
///
/// Arithmetic follows nalgebra's convention and panics on shape mismatch;
/// problem construction re-validates shapes when constraints are added.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn constant(value: DMatrix<f64>) -> Self {
        Self {
            constant: value,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, value))
    }

    pub(crate) fn from_parts(constant: DMatrix<f64>, terms: BTreeMap<usize, DMatrix<f64>>) -> Self {
        Self { constant, terms }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// `(variable index, coefficient)` pairs in index order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(&k, v)| (k, v))
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&k, v)| (k, f(v))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|m| m * factor)
    }

    /// `L · self`.
    pub fn left_mul(&self, l: &DMatrix<f64>) -> Self {
        assert_eq!(l.ncols(), self.shape().0, "left factor shape mismatch");
        self.map(|m| l * m)
    }

    /// `self · R`.
    pub fn right_mul(&self, r: &DMatrix<f64>) -> Self {
        assert_eq!(r.nrows(), self.shape().1, "right factor shape mismatch");
        self.map(|m| m * r)
    }

    /// `tr(self)` as a `1×1` expression.
    pub fn trace(&self) -> Self {
        self.map(|m| DMatrix::from_element(1, 1, m.trace()))
    }

    /// `⟨W, self⟩ = tr(Wᵀ self)` as a `1×1` expression.
    pub fn inner(&self, weight: &DMatrix<f64>) -> Self {
        assert_eq!(weight.shape(), self.shape(), "inner product shape mismatch");
        self.map(|m| DMatrix::from_element(1, 1, weight.dot(m)))
    }

    /// Sub-block with top-left corner `start` and size `shape`.
    pub fn view(&self, start: (usize, usize), shape: (usize, usize)) -> Self {
        self.map(|m| m.view(start, shape).into_owned())
    }

    pub fn entry(&self, i: usize, j: usize) -> Self {
        self.view((i, j), (1, 1))
    }

    /// Assembles a block matrix from a grid of expressions.
    ///
    /// Every block in a row must share a row count and every block in a
    /// column a column count.
    pub fn block(grid: &[Vec<AffineExpr>]) -> Self {
        assert!(!grid.is_empty() && !grid[0].is_empty(), "empty block grid");
        let cols = grid[0].len();
        assert!(grid.iter().all(|row| row.len() == cols), "ragged block grid");
        let heights: Vec<usize> = grid.iter().map(|row| row[0].shape().0).collect();
        let widths: Vec<usize> = grid[0].iter().map(|e| e.shape().1).collect();
        for (i, row) in grid.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                assert_eq!(e.shape(), (heights[i], widths[j]), "block ({i}, {j}) has inconsistent shape");
            }
        }
        let total = (heights.iter().sum(), widths.iter().sum());
        let mut out = AffineExpr::zeros(total.0, total.1);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, e) in row.iter().enumerate() {
                let shape = (heights[i], widths[j]);
                out.constant.view_mut((r0, c0), shape).copy_from(&e.constant);
                for (&k, coeff) in &e.terms {
                    out.terms
                        .entry(k)
                        .or_insert_with(|| DMatrix::zeros(total.0, total.1))
                        .view_mut((r0, c0), shape)
                        .copy_from(coeff);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        out
    }

    /// Value at the scalar assignment `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&k, coeff) in &self.terms {
            out += coeff * x[k];
        }
        out
    }

    /// Largest asymmetry `‖M − Mᵀ‖_F` over the constant and every coefficient.
    pub fn asymmetry(&self) -> f64 {
        std::iter::once(&self.constant)
            .chain(self.terms.values())
            .map(|m| if m.is_square() { (m - m.transpose()).norm() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine expression shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant * sign;
        for (&k, coeff) in &other.terms {
            match out.terms.get_mut(&k) {
                Some(existing) => *existing += coeff * sign,
                None => {
                    out.terms.insert(k, coeff * sign);
                }
            }
        }
        out
    }
}

impl From<DMatrix<f64>> for AffineExpr {
    fn from(value: DMatrix<f64>) -> Self {
        Self::constant(value)
    }
}

impl Add for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: &AffineExpr) -> AffineExpr {
        self.combine(rhs, -1.0)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: AffineExpr) -> AffineExpr {
        &self + &rhs
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        &self - &rhs
    }
}

impl Neg for &AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Mul<&AffineExpr> for &DMatrix<f64> {
    type Output = AffineExpr;
    fn mul(self, rhs: &AffineExpr) -> AffineExpr {
        rhs.left_mul(self)
    }
}

impl Mul<&DMatrix<f64>> for &AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: &DMatrix<f64>) -> AffineExpr {
        self.right_mul(rhs)
    }
}
