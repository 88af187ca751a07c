use nalgebra::{DMatrix, DVector};

use super::{
    block_diag, check_finite, check_shape, gram, min_eigenvalue, psd_tolerance, spectral_radius,
    STABILITY_MARGIN,
};
use crate::error::{Error, Result};

/// Discrete-time linear system `x⁺ = A x + B u` with discount `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    alpha: f64,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, alpha: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::dim("A", (n.max(1), n.max(1)), a.shape()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim("B", (n, b.ncols().max(1)), b.shape()));
        }
        check_finite("A", &a)?;
        check_finite("B", &b)?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self { a, b, alpha })
    }

    /// Undiscounted model (`alpha = 1`).
    pub fn undiscounted(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, 1.0)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), alpha)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B]`, an `n×(n+m)` matrix.
    pub fn ab(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.a);
        out.view_mut((0, n), (n, m)).copy_from(&self.b);
        out
    }

    /// `A + B F`.
    pub fn state_map(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_shape("gain F", f, self.m(), self.n())?;
        Ok(&self.a + &self.b * f)
    }

    /// `√α · ρ(A + B F)`.
    pub fn discounted_radius(&self, f: &DMatrix<f64>) -> Result<f64> {
        Ok(self.alpha.sqrt() * spectral_radius(&self.state_map(f)?)?)
    }
}

/// Quadratic stage cost `xᵀQx + uᵀRu`, with `Λ = diag(Q, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    lambda: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::dim("Q", (q.nrows(), q.nrows()), q.shape()));
        }
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::dim("R", (r.nrows(), r.nrows()), r.shape()));
        }
        check_finite("Q", &q)?;
        check_finite("R", &r)?;
        check_symmetric("Q", &q)?;
        check_symmetric("R", &r)?;
        let q_min = min_eigenvalue(&q);
        if q_min < -psd_tolerance(&q) {
            return Err(Error::InvalidArgument(format!(
                "Q must be positive semidefinite (min eigenvalue {q_min:.3e})"
            )));
        }
        let r_min = min_eigenvalue(&r);
        if r_min <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "R must be positive definite (min eigenvalue {r_min:.3e})"
            )));
        }
        let lambda = block_diag(&q, &r);
        Ok(Self { q, r, lambda })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `Λ = diag(Q, R)`.
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn check_against(&self, model: &SystemModel) -> Result<()> {
        check_shape("Q", &self.q, model.n(), model.n())?;
        check_shape("R", &self.r, model.m(), model.m())
    }
}

fn check_symmetric(what: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * (1.0 + m.norm()) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

fn check_positive_definite(what: &str, m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(what, m)?;
    let min = min_eigenvalue(m);
    if min <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{what} must be positive definite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Excitation data: the state Gram matrix `Z` and, for the model-free
/// cost, the augmented Gram matrix `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    z: DMatrix<f64>,
    gamma: Option<DMatrix<f64>>,
}

impl ExcitationSpec {
    pub fn from_state_gram(z: DMatrix<f64>) -> Result<Self> {
        if !z.is_square() || z.nrows() == 0 {
            return Err(Error::dim("Z", (z.nrows(), z.nrows()), z.shape()));
        }
        check_finite("Z", &z)?;
        check_positive_definite("Z", &z)?;
        Ok(Self { z, gamma: None })
    }

    /// `Z = Σ z_i z_iᵀ`.
    pub fn from_state_seeds(seeds: &[DVector<f64>]) -> Result<Self> {
        Self::from_state_gram(gram(seeds)?)
    }

    /// Augmented excitation alone; the state Gram is taken as `Γ₁₁`, the
    /// Gram matrix of the seeds' state blocks.
    pub fn from_augmented_gram(gamma: DMatrix<f64>, n: usize) -> Result<Self> {
        if !gamma.is_square() || gamma.nrows() <= n || n == 0 {
            return Err(Error::dim("Gamma", (n + 1, n + 1), gamma.shape()));
        }
        let z = gamma.view((0, 0), (n, n)).into_owned();
        Self::from_state_gram(z)?.with_augmented_gram(gamma)
    }

    /// `Γ = Σ v_i v_iᵀ` with state dimension `n`.
    pub fn from_augmented_seeds(seeds: &[DVector<f64>], n: usize) -> Result<Self> {
        Self::from_augmented_gram(gram(seeds)?, n)
    }

    pub fn with_augmented_gram(mut self, gamma: DMatrix<f64>) -> Result<Self> {
        let dim = gamma.nrows();
        if !gamma.is_square() || dim <= self.n() {
            return Err(Error::dim("Gamma", (dim, dim), gamma.shape()));
        }
        check_finite("Gamma", &gamma)?;
        check_positive_definite("Gamma", &gamma)?;
        self.gamma = Some(gamma);
        Ok(self)
    }

    /// `Γ = Σ v_i v_iᵀ`.
    pub fn with_augmented_seeds(self, seeds: &[DVector<f64>]) -> Result<Self> {
        let gamma = gram(seeds)?;
        self.with_augmented_gram(gamma)
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn gamma(&self) -> Option<&DMatrix<f64>> {
        self.gamma.as_ref()
    }

    /// Leading `n×n` block of `Γ`.
    pub fn gamma11(&self) -> Option<DMatrix<f64>> {
        let n = self.n();
        self.gamma
            .as_ref()
            .map(|g| g.view((0, 0), (n, n)).into_owned())
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

/// Feedback gain `u = F x` together with its stability certificate.
///
/// The certificate is always computed by the constructor; it is never taken
/// from the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    f: DMatrix<f64>,
    radius: f64,
}

impl Gain {
    /// Certifies `f` against `model` by computing `√α · ρ(A + B F)`.
    pub fn new(model: &SystemModel, f: DMatrix<f64>) -> Result<Self> {
        check_finite("gain F", &f)?;
        let radius = model.discounted_radius(&f)?;
        Ok(Self { f, radius })
    }

    pub fn zeros(model: &SystemModel) -> Self {
        Self::new(model, DMatrix::zeros(model.m(), model.n()))
            .expect("zero gain has consistent dimensions")
    }

    /// Certificate from a data-driven estimate of the closed loop.
    pub(crate) fn from_estimate(f: DMatrix<f64>, radius: f64) -> Self {
        Self { f, radius }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.f
    }

    /// Discounted spectral radius `√α · ρ(A + B F)`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_stabilizing(&self) -> bool {
        self.radius < 1.0 - STABILITY_MARGIN
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn double_integrator() -> SystemModel {
        SystemModel::undiscounted(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.0; 1.0]).unwrap()
    }

    #[test]
    fn model_rejects_bad_alpha() {
        let sys = double_integrator();
        assert!(sys.with_alpha(0.0).is_err());
        assert!(sys.with_alpha(1.5).is_err());
        assert!(sys.with_alpha(0.9).is_ok());
    }

    #[test]
    fn model_rejects_mismatched_b() {
        let err = SystemModel::undiscounted(DMatrix::identity(2, 2), DMatrix::zeros(3, 1));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn cost_rejects_indefinite_q_and_singular_r() {
        assert!(CostSpec::new(dmatrix![1.0, 0.0; 0.0, -1.0], dmatrix![1.0]).is_err());
        assert!(CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.0]).is_err());
        assert!(CostSpec::new(dmatrix![1.0, 2.0; 0.0, 1.0], dmatrix![1.0]).is_err());
    }

    #[test]
    fn lambda_is_block_diagonal() {
        let c = CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.1]).unwrap();
        assert_eq!(c.lambda(), &dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 0.1]);
    }

    #[test]
    fn excitation_gram_from_seeds() {
        let seeds = vec![nalgebra::dvector![1.0, 0.0], nalgebra::dvector![1.0, 1.0]];
        let e = ExcitationSpec::from_state_seeds(&seeds).unwrap();
        assert!((e.z() - dmatrix![2.0, 1.0; 1.0, 1.0]).norm() < 1e-12);
        assert!(ExcitationSpec::from_state_seeds(&seeds[..1]).is_err());
    }

    #[test]
    fn example_gain_stabilizes_double_integrator() {
        let g = Gain::new(&double_integrator(), dmatrix![-0.5792, -1.5456]).unwrap();
        assert!(g.is_stabilizing());
        assert!(!Gain::zeros(&double_integrator()).is_stabilizing());
    }
}
