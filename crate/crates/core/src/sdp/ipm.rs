//! Dense primal-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  G x + s = h,  s ∈ 𝕊₊^{d₁} × … × 𝕊₊^{d_k}
//! ```
//!
//! on the homogeneous self-dual embedding, with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector. Cone vectors use the `svec` layout (lower
//! triangle by columns, off-diagonals times √2) so that `⟨svec A, svec B⟩ =
//! tr(AB)`. The Newton system is reduced to least squares on `W⁻ᵀG` and
//! solved by QR; at desk scale (a few hundred scalars) this is exact enough
//! and needs nothing beyond dense factorizations.

use nalgebra::{DMatrix, DVector};

const STEP_FRACTION: f64 = 0.99;
const SIGMA_EXPONENT: i32 = 3;
/// Residual growth over the best iterate that signals loss of accuracy.
const BREAKDOWN_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Requested primal/dual feasibility and gap tolerance.
    pub tolerance: f64,
    /// Tolerance still reported as optimal when progress stalls.
    pub accept_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tolerance: 1e-9,
            accept_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConeStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Inaccurate,
    Failed,
}

/// A conic program in the standard form above.
#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub blocks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeResult {
    pub status: ConeStatus,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub message: String,
}

pub(crate) fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

pub(crate) fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let d = m.nrows();
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            out[k] = if i == j {
                m[(i, j)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2
            };
            k += 1;
        }
    }
}

pub(crate) fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                let val = v[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
            k += 1;
        }
    }
    m
}

struct Layout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in dims {
            offsets.push(total);
            total += svec_len(d);
        }
        Self {
            dims: dims.to_vec(),
            offsets,
            total,
        }
    }

    fn degree(&self) -> usize {
        self.dims.iter().sum()
    }

    fn mats(&self, v: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.dims
            .iter()
            .zip(&self.offsets)
            .map(|(&d, &o)| smat(&v.as_slice()[o..o + svec_len(d)], d))
            .collect()
    }

    fn vec(&self, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.total);
        for (m, &o) in mats.iter().zip(&self.offsets) {
            let len = svec_len(m.nrows());
            svec_into(m, &mut out.as_mut_slice()[o..o + len]);
        }
        out
    }
}

/// Nesterov–Todd scaling `W`, stored per block as `r` and `rti = r⁻ᵀ`, with
/// `W z = rᵀ z r = λ = rtiᵀ s rti = W⁻ᵀ s`.
struct Scaling {
    r: Vec<DMatrix<f64>>,
    rti: Vec<DMatrix<f64>>,
    lambda: Vec<DVector<f64>>,
}

fn nt_block(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let svd = (lz.transpose() * &ls).svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    Some((ls * v * &inv_sqrt, lz * u * inv_sqrt, lambda))
}

impl Scaling {
    fn new(s: &[DMatrix<f64>], z: &[DMatrix<f64>]) -> Option<Self> {
        let mut out = Scaling {
            r: Vec::new(),
            rti: Vec::new(),
            lambda: Vec::new(),
        };
        for (sb, zb) in s.iter().zip(z) {
            let (r, rti, l) = nt_block(sb, zb)?;
            out.r.push(r);
            out.rti.push(rti);
            out.lambda.push(l);
        }
        Some(out)
    }

    /// Rescales after a step to `(λ + αΔs̃, λ + αΔz̃)` in the current
    /// scaled coordinates.
    fn update(&mut self, ds: &[DMatrix<f64>], dz: &[DMatrix<f64>], step: f64) -> bool {
        let mut next = Vec::with_capacity(self.r.len());
        for (k, lam) in self.lambda.iter().enumerate() {
            let base = DMatrix::from_diagonal(lam);
            let s_new = &base + &ds[k] * step;
            let z_new = &base + &dz[k] * step;
            match nt_block(&sym(&s_new), &sym(&z_new)) {
                Some(b) => next.push(b),
                None => return false,
            }
        }
        for (k, (r, rti, l)) in next.into_iter().enumerate() {
            self.r[k] = &self.r[k] * r;
            self.rti[k] = &self.rti[k] * rti;
            self.lambda[k] = l;
        }
        true
    }

    fn s(&self) -> Vec<DMatrix<f64>> {
        self.r
            .iter()
            .zip(&self.lambda)
            .map(|(r, l)| sym(&(r * DMatrix::from_diagonal(l) * r.transpose())))
            .collect()
    }

    fn z(&self) -> Vec<DMatrix<f64>> {
        self.rti
            .iter()
            .zip(&self.lambda)
            .map(|(t, l)| sym(&(t * DMatrix::from_diagonal(l) * t.transpose())))
            .collect()
    }

    /// `W⁻ᵀ(U) = rtiᵀ U rti` blockwise.
    fn apply_inv_t(&self, u: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        self.rti
            .iter()
            .zip(u)
            .map(|(t, m)| sym(&(t.transpose() * m * t)))
            .collect()
    }

    fn lambda_sq_sum(&self) -> f64 {
        self.lambda.iter().map(|l| l.norm_squared()).sum()
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrized product `(AB + BA)/2`.
fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    sym(&(a * b))
}

/// Solves `λ ∘ Y = U` for diagonal `λ`: `Y_ij = 2 U_ij / (λ_i + λ_j)`.
fn jordan_div(lambda: &DVector<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| 2.0 * u[(i, j)] / (lambda[i] + lambda[j]))
}

/// Largest `α` keeping `diag(λ) + α D ⪰ 0`.
fn max_step_block(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
    let m = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| inv_sqrt[i] * d[(i, j)] * inv_sqrt[j]);
    let min = sym(&m).symmetric_eigenvalues().min();
    if min < 0.0 {
        -1.0 / min
    } else {
        f64::INFINITY
    }
}

fn max_step(scaling: &Scaling, ds: &[DMatrix<f64>], dz: &[DMatrix<f64>], tau: f64, dtau: f64, kappa: f64, dkappa: f64) -> f64 {
    let mut step = f64::INFINITY;
    for (k, lam) in scaling.lambda.iter().enumerate() {
        step = step.min(max_step_block(lam, &ds[k])).min(max_step_block(lam, &dz[k]));
    }
    if dtau < 0.0 {
        step = step.min(-tau / dtau);
    }
    if dkappa < 0.0 {
        step = step.min(-kappa / dkappa);
    }
    step
}

/// Least-squares solver for `(W⁻ᵀG)ᵀ(W⁻ᵀG) dx = b_x + (W⁻ᵀG)ᵀ b_z`.
struct Kkt {
    g_hat: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Kkt {
    fn new(layout: &Layout, g: &DMatrix<f64>, scaling: &Scaling) -> Option<Self> {
        let mut g_hat = DMatrix::zeros(g.nrows(), g.ncols());
        for col in 0..g.ncols() {
            let mats = layout.mats(&g.column(col).into_owned());
            let scaled = layout.vec(&scaling.apply_inv_t(&mats));
            g_hat.set_column(col, &scaled);
        }
        let r = g_hat.clone().qr().r();
        let diag = r.diagonal().map(f64::abs);
        if !(diag.min() > f64::EPSILON * 1e-6 * diag.max()) {
            return None;
        }
        Some(Self { g_hat, r })
    }

    /// Returns `(dx, Δz̃)` with `Δz̃ = Ĝ dx − b_z`.
    fn solve(&self, bx: &DVector<f64>, bz: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let rhs = bx + self.g_hat.transpose() * bz;
        let y = self.r.transpose().solve_lower_triangular(&rhs)?;
        let dx = self.r.solve_upper_triangular(&y)?;
        let dz = &self.g_hat * &dx - bz;
        Some((dx, dz))
    }
}

struct Snapshot {
    merit: f64,
    x: DVector<f64>,
    z: DVector<f64>,
    pres: f64,
    dres: f64,
    gap: f64,
}

struct Direction {
    dx: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dtau: f64,
    dkappa: f64,
}

pub(crate) fn solve_cone(prog: &ConeProgram, settings: &SolverSettings) -> ConeResult {
    let layout = Layout::new(&prog.blocks);
    let (g, h, c) = (&prog.g, &prog.h, &prog.c);
    let p = c.len();
    let fail = |message: &str, x: DVector<f64>| ConeResult {
        status: ConeStatus::Failed,
        x,
        z: DVector::zeros(layout.total),
        iterations: 0,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        message: message.to_string(),
    };
    if g.nrows() != layout.total || g.ncols() != p || h.len() != layout.total {
        return fail("inconsistent cone program dimensions", DVector::zeros(p));
    }

    // Initial point: least-squares primal, minimum-norm dual, both pushed
    // into the cone interior.
    let gtg = g.transpose() * g;
    let Some(chol) = gtg.cholesky() else {
        return fail("constraint map does not have full column rank", DVector::zeros(p));
    };
    let x0 = chol.solve(&(g.transpose() * h));
    let s0 = layout.mats(&(h - g * &x0));
    let z0 = layout.mats(&(-(g * chol.solve(c))));
    let shift = |mats: Vec<DMatrix<f64>>| -> Vec<DMatrix<f64>> {
        let worst = mats
            .iter()
            .map(|m| -m.clone().symmetric_eigenvalues().min())
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < 0.0 {
            mats
        } else {
            mats.into_iter()
                .map(|m| {
                    let d = m.nrows();
                    m + DMatrix::identity(d, d) * (1.0 + worst)
                })
                .collect()
        }
    };
    let Some(mut scaling) = Scaling::new(&shift(s0), &shift(z0)) else {
        return fail("could not scale the initial point", x0);
    };
    let mut x = x0;
    let (mut tau, mut kappa) = (1.0, 1.0);
    let (h_norm, c_norm) = (h.norm().max(1.0), c.norm().max(1.0));
    let degree = layout.degree() as f64;

    let mut status = ConeStatus::Inaccurate;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap, mut relgap, mut pinf): (f64, f64, f64, f64, f64);
    let mut s_vec;
    let mut z_vec;
    // Last-resort fallback when the iteration degrades near the optimum.
    let mut best: Option<Snapshot> = None;

    loop {
        s_vec = layout.vec(&scaling.s());
        z_vec = layout.vec(&scaling.z());
        let rx = g.transpose() * &z_vec + c * tau;
        let rz = &s_vec + g * &x - h * tau;
        let cx = c.dot(&x);
        let hz = h.dot(&z_vec);
        let rt = kappa + cx + hz;
        let sz = s_vec.dot(&z_vec);
        let mu = (scaling.lambda_sq_sum() + tau * kappa) / (degree + 1.0);

        pres = rz.norm() / tau / h_norm;
        dres = rx.norm() / tau / c_norm;
        gap = sz / (tau * tau);
        let (pcost, dcost) = (cx / tau, -hz / tau);
        let scale = pcost.abs().max(dcost.abs());
        relgap = if scale > 0.0 { gap / scale } else { f64::INFINITY };
        pinf = if hz < 0.0 {
            (g.transpose() * &z_vec).norm() / c_norm / -hz
        } else {
            f64::INFINITY
        };
        let dinf = if cx < 0.0 {
            (g * &x + &s_vec).norm() / h_norm / -cx
        } else {
            f64::INFINITY
        };

        let merit = pres.max(dres).max(gap.min(relgap));
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(Snapshot {
                merit,
                x: &x / tau,
                z: &z_vec / tau,
                pres,
                dres,
                gap,
            });
        }
        if let Some(b) = &best {
            if b.merit <= settings.accept_tolerance && merit > BREAKDOWN_FACTOR * b.merit {
                message = String::from("numerical breakdown near the optimum");
                break;
            }
        }

        let tol = settings.tolerance;
        if pres <= tol && dres <= tol && (gap <= tol || relgap <= tol) {
            status = ConeStatus::Optimal;
            message = String::from("converged");
            break;
        }
        if pinf <= tol {
            status = ConeStatus::PrimalInfeasible;
            message = String::from("primal infeasibility certificate found");
            break;
        }
        if dinf <= tol {
            status = ConeStatus::DualInfeasible;
            message = String::from("dual infeasibility certificate found");
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        let Some(kkt) = Kkt::new(&layout, g, &scaling) else {
            message = String::from("Newton system became singular");
            break;
        };
        let h_hat = layout.vec(&scaling.apply_inv_t(&layout.mats(h)));
        let Some((dx1, dz1)) = kkt.solve(&(-c), &h_hat) else {
            message = String::from("Newton solve failed");
            break;
        };
        let rz_hat = layout.vec(&scaling.apply_inv_t(&layout.mats(&rz)));
        let lam_mats: Vec<DMatrix<f64>> = scaling.lambda.iter().map(DMatrix::from_diagonal).collect();

        // `eta` scales the residual targets; `rc` are the complementarity targets.
        let direction = |eta: f64, rc: &[DMatrix<f64>], rtau: f64| -> Option<Direction> {
            let r_hat: Vec<DMatrix<f64>> = scaling
                .lambda
                .iter()
                .zip(rc)
                .map(|(l, u)| jordan_div(l, u))
                .collect();
            let r_hat_vec = layout.vec(&r_hat);
            let bz = -(&rz_hat * (1.0 - eta)) - &r_hat_vec;
            let (dx2, dz2) = kkt.solve(&(-(&rx * (1.0 - eta))), &bz)?;
            let denom = c.dot(&dx1) + h_hat.dot(&dz1) - kappa / tau;
            let numer = -(1.0 - eta) * rt - rtau / tau - c.dot(&dx2) - h_hat.dot(&dz2);
            let dtau = numer / denom;
            if !dtau.is_finite() {
                return None;
            }
            let dkappa = (rtau - kappa * dtau) / tau;
            let dx = dx2 + &dx1 * dtau;
            let dz_vec = dz2 + &dz1 * dtau;
            let dz = layout.mats(&dz_vec);
            let ds = r_hat.iter().zip(&dz).map(|(r, z)| r - z).collect();
            Some(Direction { dx, ds, dz, dtau, dkappa })
        };

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = lam_mats.iter().map(|l| -(l * l)).collect();
        let Some(aff) = direction(0.0, &rc_aff, -tau * kappa) else {
            message = String::from("Newton solve failed");
            break;
        };
        let step_aff = max_step(&scaling, &aff.ds, &aff.dz, tau, aff.dtau, kappa, aff.dkappa).min(1.0);
        let sigma = (1.0 - step_aff).powi(SIGMA_EXPONENT);

        // corrector
        let rc: Vec<DMatrix<f64>> = lam_mats
            .iter()
            .zip(aff.ds.iter().zip(&aff.dz))
            .map(|(l, (ds, dz))| {
                let d = l.nrows();
                -(l * l) + DMatrix::identity(d, d) * (sigma * mu) - jordan(ds, dz)
            })
            .collect();
        let rtau = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        let Some(dir) = direction(sigma, &rc, rtau) else {
            message = String::from("Newton solve failed");
            break;
        };
        let step = (STEP_FRACTION * max_step(&scaling, &dir.ds, &dir.dz, tau, dir.dtau, kappa, dir.dkappa)).min(1.0);
        if !(step > 1e-12) {
            message = String::from("step length collapsed");
            break;
        }
        if !scaling.update(&dir.ds, &dir.dz, step) {
            message = String::from("lost positive definiteness during update");
            break;
        }
        x += dir.dx * step;
        tau += dir.dtau * step;
        kappa += dir.dkappa * step;
        iterations += 1;
    }

    if status == ConeStatus::Inaccurate {
        let tol = settings.accept_tolerance;
        if let Some(b) = best.filter(|b| b.merit <= tol) {
            return ConeResult {
                status: ConeStatus::Optimal,
                x: b.x,
                z: b.z,
                iterations,
                primal_residual: b.pres,
                dual_residual: b.dres,
                gap: b.gap,
                message: format!("{message}; accepted best iterate at reduced accuracy"),
            };
        }
        if pinf <= tol {
            status = ConeStatus::PrimalInfeasible;
        }
    }

    let (x, z) = match status {
        ConeStatus::PrimalInfeasible => {
            let hz = -h.dot(&z_vec);
            (x, z_vec / hz)
        }
        ConeStatus::DualInfeasible => {
            let cx = -c.dot(&x);
            (&x / cx, z_vec)
        }
        _ => (x / tau, z_vec / tau),
    };
    ConeResult {
        status,
        x,
        z,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        message,
    }
}
