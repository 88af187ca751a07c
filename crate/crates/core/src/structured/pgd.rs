use nalgebra::{DMatrix, DVector};

use super::gradient::{gradient_from_blocks, gradient_state_gram, z_cost};
use super::mask::StructureMask;
use crate::error::{Error, Result};
use crate::linalg::{gram, CostSpec, Gain, SystemModel, STABILITY_MARGIN};
use crate::trajectory::{auto_horizon, rollout_adjoint_aggregate, rollout_state_aggregate, AdjointSeeds, DEFAULT_TAIL_EPS};

const MAX_BACKTRACKS: usize = 60;

/// Step-size rule for `F_{t+1} = Π_𝒦(F_t − γ_t d_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Constant { step: f64 },
    /// `γ_t = initial / (1 + t)`.
    Diminishing { initial: f64 },
    /// Backtracking from `max_step` by `beta` until
    /// `J(F_{t+1}) ≤ J(F_t) − σ γ ‖d_t‖²`.
    Armijo { sigma: f64, beta: f64, max_step: f64 },
}

impl StepRule {
    pub fn armijo() -> Self {
        StepRule::Armijo {
            sigma: 1e-4,
            beta: 0.5,
            max_step: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepRule::Constant { step } => step > 0.0 && step.is_finite(),
            StepRule::Diminishing { initial } => initial > 0.0 && initial.is_finite(),
            StepRule::Armijo { sigma, beta, max_step } => {
                sigma > 0.0 && sigma < 1.0 && beta > 0.0 && beta < 1.0 && max_step > 0.0 && max_step.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step rule {self:?}")))
        }
    }
}

impl Default for StepRule {
    fn default() -> Self {
        Self::armijo()
    }
}

/// Truncation horizon of simulated aggregates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Smallest `M` whose predicted tail is below `eps`, recomputed per iterate.
    Auto { eps: f64 },
    Fixed(usize),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Auto { eps: DEFAULT_TAIL_EPS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdConfig {
    pub step_rule: StepRule,
    pub max_iter: usize,
    /// Stop once `‖Π_𝒦(∇J)‖_F` drops to this value.
    pub grad_tol: f64,
    pub horizon: Horizon,
    /// Keep every iterate; otherwise only the final one is stored.
    pub record_history: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::default(),
            max_iter: 1000,
            grad_tol: 1e-6,
            horizon: Horizon::default(),
            record_history: true,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        self.step_rule.validate()?;
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("grad_tol must be non-negative, got {}", self.grad_tol)));
        }
        if let Horizon::Auto { eps } = self.horizon {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidArgument(format!("horizon eps must lie in (0, 1), got {eps}")));
            }
        }
        Ok(())
    }
}

/// Where the model-based algorithm gets `S` and `P` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Stein equation solves.
    #[default]
    Exact,
    /// State and adjoint rollouts truncated at the configured horizon.
    Simulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub t: usize,
    pub gain: DMatrix<f64>,
    pub cost: f64,
    /// `‖Π_𝒦(∇J(F_t))‖_F`.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No Armijo step was found within the backtracking budget.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct PgdRun {
    pub history: Vec<Iterate>,
    pub gain: Gain,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// A cost over gains, as seen by the descent loop.
pub(crate) trait Objective {
    /// Certifies `f`; the radius decides membership in the stabilizing set.
    fn certify(&self, f: &DMatrix<f64>) -> Result<Gain>;
    fn cost(&self, gain: &Gain) -> Result<f64>;
    fn cost_and_gradient(&self, gain: &Gain) -> Result<(f64, DMatrix<f64>)>;
}

fn step_size(rule: &StepRule, t: usize) -> f64 {
    match *rule {
        StepRule::Constant { step } => step,
        StepRule::Diminishing { initial } => initial / (1.0 + t as f64),
        StepRule::Armijo { max_step, .. } => max_step,
    }
}

pub(crate) fn descend<O: Objective>(objective: &O, mask: &StructureMask, f0: &DMatrix<f64>, cfg: &PgdConfig) -> Result<PgdRun> {
    cfg.validate()?;
    if f0.shape() != mask.shape() {
        return Err(Error::dim("initial gain F0", mask.shape(), f0.shape()));
    }
    if !mask.contains(f0) {
        return Err(Error::InvalidArgument("initial gain F0 violates the structure mask".into()));
    }
    let mut gain = objective.certify(f0)?;
    if !gain.is_stabilizing() {
        return Err(Error::Unstable { radius: gain.radius() });
    }
    let (mut cost, mut grad) = objective.cost_and_gradient(&gain)?;
    let mut history = Vec::new();
    let mut t = 0;
    let termination = loop {
        let d = mask.project(&grad)?;
        let grad_norm = d.norm();
        let iterate = Iterate {
            t,
            gain: gain.matrix().clone(),
            cost,
            grad_norm,
        };
        if cfg.record_history {
            history.push(iterate);
        } else {
            history.clear();
            history.push(iterate);
        }
        if grad_norm <= cfg.grad_tol {
            break Termination::Converged;
        }
        if t >= cfg.max_iter {
            break Termination::MaxIterations;
        }
        let mut step = step_size(&cfg.step_rule, t);
        let next = match cfg.step_rule {
            StepRule::Constant { .. } | StepRule::Diminishing { .. } => {
                let candidate = objective.certify(&mask.project(&(gain.matrix() - &d * step))?)?;
                if !candidate.is_stabilizing() {
                    return Err(Error::UnstableIterate {
                        iteration: t + 1,
                        radius: candidate.radius(),
                    });
                }
                Some(candidate)
            }
            StepRule::Armijo { sigma, beta, .. } => {
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACKS {
                    let candidate = objective.certify(&mask.project(&(gain.matrix() - &d * step))?)?;
                    if candidate.radius() < 1.0 - STABILITY_MARGIN {
                        let trial = objective.cost(&candidate)?;
                        if trial <= cost - sigma * step * grad_norm * grad_norm {
                            accepted = Some(candidate);
                            break;
                        }
                    }
                    step *= beta;
                }
                accepted
            }
        };
        let Some(next) = next else {
            break Termination::LineSearchStalled;
        };
        gain = next;
        (cost, grad) = objective.cost_and_gradient(&gain)?;
        t += 1;
    };
    let last = history.last().expect("at least one iterate");
    Ok(PgdRun {
        cost: last.cost,
        grad_norm: last.grad_norm,
        iterations: t,
        gain,
        history,
        termination,
    })
}

/// Model-based objective `J_α(F, z)` summed over the initial states.
struct ModelObjective<'a> {
    model: &'a SystemModel,
    cost: &'a CostSpec,
    states: &'a [DVector<f64>],
    z_gram: DMatrix<f64>,
    adjoint: AdjointSeeds,
    mode: GradientMode,
    horizon: Horizon,
}

impl ModelObjective<'_> {
    fn horizon_for(&self, gain: &Gain) -> Result<usize> {
        match self.horizon {
            Horizon::Fixed(m) => Ok(m),
            Horizon::Auto { eps } => auto_horizon(self.model, gain, eps),
        }
    }

    fn state_aggregate(&self, gain: &Gain, horizon: usize) -> Result<DMatrix<f64>> {
        let dim = self.model.n() + self.model.m();
        let mut acc = DMatrix::zeros(dim, dim);
        for z in self.states {
            acc += rollout_state_aggregate(self.model, gain, z, horizon)?.full();
        }
        Ok(acc)
    }
}

impl Objective for ModelObjective<'_> {
    fn certify(&self, f: &DMatrix<f64>) -> Result<Gain> {
        Gain::new(self.model, f.clone())
    }

    fn cost(&self, gain: &Gain) -> Result<f64> {
        match self.mode {
            GradientMode::Exact => z_cost(self.model, gain, self.cost, &self.z_gram),
            GradientMode::Simulated => {
                let m = self.horizon_for(gain)?;
                Ok(self.cost.lambda().dot(&self.state_aggregate(gain, m)?))
            }
        }
    }

    fn cost_and_gradient(&self, gain: &Gain) -> Result<(f64, DMatrix<f64>)> {
        match self.mode {
            GradientMode::Exact => Ok((
                z_cost(self.model, gain, self.cost, &self.z_gram)?,
                gradient_state_gram(self.model, gain, self.cost, &self.z_gram)?,
            )),
            GradientMode::Simulated => {
                let m = self.horizon_for(gain)?;
                let s = self.state_aggregate(gain, m)?;
                let p = rollout_adjoint_aggregate(self.model, gain, &self.adjoint, m)?;
                let n = self.model.n();
                let s11 = s.view((0, 0), (n, n)).into_owned();
                Ok((self.cost.lambda().dot(&s), gradient_from_blocks(&p, gain.matrix(), &s11)))
            }
        }
    }
}

/// Projected gradient descent on `J_α(F, z) = Σ_i J_α(F, z_i)` over `F ∈ 𝒦`.
///
/// A single initial state is passed as a one-element slice.
pub fn pgd_run(
    model: &SystemModel,
    cost: &CostSpec,
    mask: &StructureMask,
    f0: &Gain,
    z: &[DVector<f64>],
    cfg: &PgdConfig,
    mode: GradientMode,
) -> Result<PgdRun> {
    cost.check_against(model)?;
    if mask.shape() != (model.m(), model.n()) {
        return Err(Error::dim("structure mask", (model.m(), model.n()), mask.shape()));
    }
    if z.is_empty() {
        return Err(Error::InvalidArgument("at least one initial state is required".into()));
    }
    if let Some(bad) = z.iter().find(|z| z.len() != model.n()) {
        return Err(Error::dim("initial state z", (model.n(), 1), (bad.len(), 1)));
    }
    let objective = ModelObjective {
        model,
        cost,
        states: z,
        z_gram: gram(z)?,
        adjoint: AdjointSeeds::from_cost(cost),
        mode,
        horizon: cfg.horizon,
    };
    descend(&objective, mask, f0.matrix(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{double_integrator, double_integrator_cost};
    use crate::linalg::dare_oracle;
    use nalgebra::{dmatrix, dvector};

    fn identity_states() -> Vec<DVector<f64>> {
        vec![dvector![1.0, 0.0], dvector![0.0, 1.0]]
    }

    #[test]
    fn huge_tolerance_returns_initial_gain() {
        let sys = double_integrator(0.9);
        let f0 = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let cfg = PgdConfig {
            grad_tol: 1e12,
            ..PgdConfig::default()
        };
        let run = pgd_run(&sys, &double_integrator_cost(), &StructureMask::full(1, 2), &f0, &identity_states(), &cfg, GradientMode::Exact).unwrap();
        assert_eq!(run.iterations, 0);
        assert_eq!(run.gain.matrix(), f0.matrix());
        assert_eq!(run.termination, Termination::Converged);
    }

    #[test]
    fn armijo_recovers_riccati_gain() {
        let sys = double_integrator(0.9);
        let c = double_integrator_cost();
        let f0 = Gain::zeros(&sys);
        let cfg = PgdConfig {
            max_iter: 5000,
            grad_tol: 1e-8,
            ..PgdConfig::default()
        };
        let run = pgd_run(&sys, &c, &StructureMask::full(1, 2), &f0, &identity_states(), &cfg, GradientMode::Exact).unwrap();
        let star = dare_oracle(&sys, &c).unwrap();
        assert!((run.gain.matrix() - star.gain.matrix()).amax() < 1e-4, "{}", run.gain.matrix());
        assert!(run.history.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn rejects_gain_outside_mask() {
        let sys = double_integrator(0.9);
        let mask = StructureMask::from_rows(&[vec![true, false]]).unwrap();
        let f0 = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let err = pgd_run(&sys, &double_integrator_cost(), &mask, &f0, &identity_states(), &PgdConfig::default(), GradientMode::Exact);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_unstable_initial_gain() {
        let sys = double_integrator(1.0);
        let err = pgd_run(&sys, &double_integrator_cost(), &StructureMask::full(1, 2), &Gain::zeros(&sys), &identity_states(), &PgdConfig::default(), GradientMode::Exact);
        assert!(matches!(err, Err(Error::Unstable { .. })));
    }

    #[test]
    fn oversized_constant_step_reports_iteration() {
        let sys = double_integrator(0.9);
        let f0 = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let cfg = PgdConfig {
            step_rule: StepRule::Constant { step: 10.0 },
            ..PgdConfig::default()
        };
        let err = pgd_run(&sys, &double_integrator_cost(), &StructureMask::full(1, 2), &f0, &identity_states(), &cfg, GradientMode::Exact);
        assert!(matches!(err, Err(Error::UnstableIterate { iteration: 1, .. })), "{err:?}");
    }

    #[test]
    fn simulated_mode_tracks_exact_mode() {
        let sys = double_integrator(0.9);
        let f0 = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let cfg = PgdConfig {
            max_iter: 5,
            ..PgdConfig::default()
        };
        let c = double_integrator_cost();
        let mask = StructureMask::full(1, 2);
        let exact = pgd_run(&sys, &c, &mask, &f0, &identity_states(), &cfg, GradientMode::Exact).unwrap();
        let sim = pgd_run(&sys, &c, &mask, &f0, &identity_states(), &cfg, GradientMode::Simulated).unwrap();
        for (a, b) in exact.history.iter().zip(&sim.history) {
            assert!((&a.gain - &b.gain).norm() < 1e-5);
        }
    }

    #[test]
    fn invalid_step_rules_are_rejected() {
        for rule in [
            StepRule::Constant { step: 0.0 },
            StepRule::Diminishing { initial: -1.0 },
            StepRule::Armijo { sigma: 1.0, beta: 0.5, max_step: 1.0 },
            StepRule::Armijo { sigma: 0.1, beta: 0.0, max_step: 1.0 },
        ] {
            let cfg = PgdConfig { step_rule: rule, ..PgdConfig::default() };
            assert!(cfg.validate().is_err());
        }
    }
}
