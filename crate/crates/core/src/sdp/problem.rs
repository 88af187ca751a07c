use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::expr::AffineExpr;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// Symmetric `d×d`, parameterized by its upper triangle.
    Symmetric(usize),
    Full(usize, usize),
}

impl VarShape {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Symmetric(d) => (d, d),
            VarShape::Full(r, c) => (r, c),
        }
    }

    fn scalars(&self) -> usize {
        match *self {
            VarShape::Symmetric(d) => d * (d + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub shape: VarShape,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A named requirement `expr ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: AffineExpr,
}

/// Linear objective over matrix variables subject to affine PSD constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    variables: Vec<Variable>,
    scalars: usize,
    sense: Sense,
    objective: AffineExpr,
    constraints: Vec<Constraint>,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self {
            variables: Vec::new(),
            scalars: 0,
            sense: Sense::Minimize,
            objective: AffineExpr::scalar(0.0),
            constraints: Vec::new(),
        }
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> Result<()> {
        let (r, c) = shape.dims();
        if r == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!("variable {name} has an empty shape")));
        }
        if self.variable(name).is_some() {
            return Err(Error::InvalidArgument(format!("variable {name} declared twice")));
        }
        let offset = self.scalars;
        self.variables.push(Variable {
            name: name.to_string(),
            shape,
            offset,
        });
        self.scalars += shape.scalars();
        Ok(())
    }

    /// Declares a symmetric `d×d` variable and returns it as an expression.
    pub fn symmetric(&mut self, name: &str, d: usize) -> Result<AffineExpr> {
        self.declare(name, VarShape::Symmetric(d))?;
        Ok(self.variable_expr(name).expect("just declared"))
    }

    /// Declares an unstructured `r×c` variable.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<AffineExpr> {
        self.declare(name, VarShape::Full(rows, cols))?;
        Ok(self.variable_expr(name).expect("just declared"))
    }

    /// The affine expression of a declared variable.
    pub fn variable_expr(&self, name: &str) -> Option<AffineExpr> {
        let var = self.variable(name)?;
        let (r, c) = var.shape.dims();
        let mut terms = BTreeMap::new();
        match var.shape {
            VarShape::Symmetric(d) => {
                let mut k = var.offset;
                for j in 0..d {
                    for i in 0..=j {
                        let mut coeff = DMatrix::zeros(d, d);
                        coeff[(i, j)] = 1.0;
                        coeff[(j, i)] = 1.0;
                        terms.insert(k, coeff);
                        k += 1;
                    }
                }
            }
            VarShape::Full(..) => {
                for idx in 0..r * c {
                    let mut coeff = DMatrix::zeros(r, c);
                    coeff[(idx % r, idx / r)] = 1.0;
                    terms.insert(var.offset + idx, coeff);
                }
            }
        }
        Some(AffineExpr::from_parts(DMatrix::zeros(r, c), terms))
    }

    fn check_scalar(&self, what: &str, expr: &AffineExpr) -> Result<()> {
        if expr.shape() != (1, 1) {
            return Err(Error::dim(what, (1, 1), expr.shape()));
        }
        self.check_indices(what, expr)
    }

    fn check_indices(&self, what: &str, expr: &AffineExpr) -> Result<()> {
        if expr.terms().any(|(k, _)| k >= self.scalars) {
            return Err(Error::InvalidArgument(format!("{what} references an undeclared variable")));
        }
        Ok(())
    }

    pub fn set_objective(&mut self, sense: Sense, expr: AffineExpr) -> Result<()> {
        self.check_scalar("objective", &expr)?;
        self.sense = sense;
        self.objective = expr;
        Ok(())
    }

    /// Adds `expr ⪰ 0`; the expression must be square and symmetric.
    pub fn add_psd(&mut self, name: &str, expr: AffineExpr) -> Result<()> {
        let (r, c) = expr.shape();
        if r != c || r == 0 {
            return Err(Error::dim(format!("constraint {name}"), (r, r), (r, c)));
        }
        self.check_indices(&format!("constraint {name}"), &expr)?;
        let asym = expr.asymmetry();
        if asym > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "constraint {name} is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        self.constraints.push(Constraint {
            name: name.to_string(),
            expr,
        });
        Ok(())
    }

    /// Adds the scalar inequality `lhs ≤ rhs` as a `1×1` PSD block.
    pub fn add_scalar_le(&mut self, name: &str, lhs: AffineExpr, rhs: f64) -> Result<()> {
        self.check_scalar(&format!("constraint {name}"), &lhs)?;
        self.add_psd(name, &AffineExpr::scalar(rhs) - &lhs)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &AffineExpr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// Matrix value of a variable under the scalar assignment `x`.
    pub fn variable_value(&self, var: &Variable, x: &[f64]) -> DMatrix<f64> {
        match var.shape {
            VarShape::Symmetric(d) => {
                let mut out = DMatrix::zeros(d, d);
                let mut k = var.offset;
                for j in 0..d {
                    for i in 0..=j {
                        out[(i, j)] = x[k];
                        out[(j, i)] = x[k];
                        k += 1;
                    }
                }
                out
            }
            VarShape::Full(r, c) => DMatrix::from_column_slice(r, c, &x[var.offset..var.offset + r * c]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn symmetric_variable_round_trip() {
        let mut p = SdpProblem::new();
        let s = p.symmetric("S", 2).unwrap();
        assert_eq!(p.num_scalars(), 3);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(s.evaluate(&x), dmatrix![1.0, 2.0; 2.0, 3.0]);
        assert_eq!(p.variable_value(p.variable("S").unwrap(), &x), dmatrix![1.0, 2.0; 2.0, 3.0]);
    }

    #[test]
    fn full_variable_is_column_major() {
        let mut p = SdpProblem::new();
        let k = p.matrix("K", 2, 2).unwrap();
        assert_eq!(k.evaluate(&[1.0, 2.0, 3.0, 4.0]), dmatrix![1.0, 3.0; 2.0, 4.0]);
    }

    #[test]
    fn rejects_bad_constraints() {
        let mut p = SdpProblem::new();
        let k = p.matrix("K", 2, 2).unwrap();
        assert!(p.add_psd("asym", k.clone()).is_err());
        let l = p.matrix("L", 1, 2).unwrap();
        assert!(p.add_psd("rect", l).is_err());
        assert!(p.symmetric("K", 1).is_err());
        assert!(p.set_objective(Sense::Minimize, k).is_err());
    }
}
