//! Executes a validated configuration and collects everything the report needs.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use lqrsynth::linalg::{dare_oracle, Gain};
use lqrsynth::modelfree::pgd_modelfree_run;
use lqrsynth::sdp::{
    build_dual_sdp, build_sdp_constrained, build_sdp_design, constrained_sweep, recover_gain, rho_grid, solve_sdp,
    verify_design, ConstraintSpec, DesignReport, SdpSolution, SdpStatus, SweepPoint,
};
use lqrsynth::structured::{pgd_run, Iterate, PgdRun, StructureMask, Termination};
use lqrsynth::trajectory::SimulatedPlant;
use lqrsynth::Error;

use crate::config::{Kind, RunConfig};

/// Process exit status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Invalid = 1,
    /// The solver ran but the problem has no acceptable answer.
    Solver = 2,
    Numerical = 3,
}

impl Exit {
    pub fn of_error(err: &Error) -> Self {
        match err {
            Error::Dimension { .. } | Error::InvalidArgument(_) | Error::Consistency { .. } => Exit::Invalid,
            Error::Unstable { .. } | Error::UnstableIterate { .. } => Exit::Solver,
            Error::Numerical(_)
            | Error::NoConvergence { .. }
            | Error::Excitation { .. }
            | Error::Degenerate(_)
            | Error::Recovery { .. } => Exit::Numerical,
        }
    }

    fn of_status(status: SdpStatus) -> Self {
        match status {
            SdpStatus::Optimal => Exit::Success,
            SdpStatus::Infeasible | SdpStatus::Unbounded | SdpStatus::Inaccurate => Exit::Solver,
            SdpStatus::Error => Exit::Numerical,
        }
    }

    fn worst(self, other: Exit) -> Exit {
        if other as u8 > self as u8 {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// `tr(P* Z)`.
    pub cost: f64,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: String,
    pub exit: Exit,
    pub message: String,
    pub objective: Option<f64>,
    pub gain: Option<DMatrix<f64>>,
    pub iterations: Option<usize>,
    pub verification: Option<DesignReport>,
    /// Riccati value `tr(P* Z)` of the unconstrained problem, for comparison.
    pub riccati_cost: Option<f64>,
    pub oracle: Option<OracleResult>,
    pub history: Vec<Iterate>,
    pub sweep: Vec<SweepPoint>,
    pub timings: Vec<(&'static str, Duration)>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            status: String::new(),
            exit: Exit::Success,
            message: String::new(),
            objective: None,
            gain: None,
            iterations: None,
            verification: None,
            riccati_cost: None,
            oracle: None,
            history: Vec::new(),
            sweep: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn fail(&mut self, err: &Error) {
        self.status = "error".into();
        self.exit = self.exit.worst(Exit::of_error(err));
        self.message = err.to_string();
    }

    fn timed<T>(&mut self, label: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.timings.push((label, start.elapsed()));
        value
    }
}

pub fn execute(cfg: &RunConfig) -> Outcome {
    let mut out = Outcome::new();
    match cfg.kind {
        Kind::Oracle => oracle(cfg, &mut out),
        Kind::Pgd => {
            let run = out.timed("pgd", || {
                let f0 = Gain::new(&cfg.model, cfg.pgd.initial_gain.clone())?;
                pgd_run(&cfg.model, &cfg.cost, &cfg.mask, &f0, &cfg.states, &cfg.pgd.config, cfg.pgd.mode)
            });
            descent(cfg, run, &cfg.z_gram, &mut out);
        }
        Kind::PgdModelfree => {
            let run = out.timed("pgd-modelfree", || {
                let plant = SimulatedPlant::new(cfg.model.clone());
                pgd_modelfree_run(
                    &plant,
                    &cfg.cost,
                    &cfg.mask,
                    &cfg.pgd.initial_gain,
                    &cfg.augmented_seeds,
                    &cfg.pgd.config,
                )
            });
            // the data-driven cost weighs initial states by Γ₁₁
            let n = cfg.model.n();
            let gamma11 = cfg.gamma.view((0, 0), (n, n)).into_owned();
            descent(cfg, run, &gamma11, &mut out);
        }
        Kind::Sdp => {
            let sol = out.timed("sdp", || build_sdp_design(&cfg.model, &cfg.cost, &cfg.z_gram).map(|p| solve_sdp(&p)));
            sdp_with_gain(cfg, sol, None, &mut out);
        }
        Kind::SdpConstrained => constrained(cfg, &mut out),
        Kind::Dual => {
            let sol = out.timed("dual", || build_dual_sdp(&cfg.model, &cfg.cost, &cfg.z_gram).map(|p| solve_sdp(&p)));
            match sol {
                Ok(sol) => {
                    record_solution(&sol, &mut out);
                    out.exit = Exit::of_status(sol.status);
                }
                Err(e) => out.fail(&e),
            }
        }
    }
    if !matches!(cfg.kind, Kind::Oracle | Kind::PgdModelfree) && cfg.mask == StructureMask::full(cfg.model.m(), cfg.model.n()) {
        out.riccati_cost = dare_oracle(&cfg.model, &cfg.cost).ok().map(|s| s.p.dot(&cfg.z_gram));
    }
    out
}

fn oracle(cfg: &RunConfig, out: &mut Outcome) {
    match out.timed("oracle", || dare_oracle(&cfg.model, &cfg.cost)) {
        Ok(sol) => {
            let cost = sol.p.dot(&cfg.z_gram);
            out.status = "optimal".into();
            out.objective = Some(cost);
            out.gain = Some(sol.gain.matrix().clone());
            out.iterations = Some(sol.iterations);
            out.message = format!("Riccati iteration converged in {} steps", sol.iterations);
            out.oracle = Some(OracleResult {
                p: sol.p,
                gain: sol.gain.into_matrix(),
                cost,
            });
        }
        Err(e) => {
            out.fail(&e);
            // a Riccati iteration that diverges means the pair is not stabilizable
            if matches!(e, Error::NoConvergence { .. } | Error::Unstable { .. }) {
                out.status = "not-stabilizable".into();
                out.exit = Exit::Solver;
            }
        }
    }
}

fn descent(cfg: &RunConfig, run: lqrsynth::Result<PgdRun>, z: &DMatrix<f64>, out: &mut Outcome) {
    let run = match run {
        Ok(run) => run,
        Err(e) => return out.fail(&e),
    };
    let (status, exit) = match run.termination {
        Termination::Converged => ("converged", Exit::Success),
        Termination::MaxIterations => ("max-iterations", Exit::Success),
        Termination::LineSearchStalled => ("line-search-stalled", Exit::Solver),
    };
    out.status = status.into();
    out.exit = exit;
    out.message = format!(
        "{} iterations, final projected gradient norm {:e}",
        run.iterations, run.grad_norm
    );
    out.objective = Some(run.cost);
    out.iterations = Some(run.iterations);
    out.gain = Some(run.gain.matrix().clone());
    out.verification = Some(verify_design(&cfg.model, &run.gain, &cfg.cost, z, None));
    out.history = run.history;
}

fn record_solution(sol: &SdpSolution, out: &mut Outcome) {
    out.status = sol.status.to_string();
    out.message = sol.message.clone();
    out.iterations = Some(sol.stats.iterations);
    out.objective = sol.objective.is_finite().then_some(sol.objective);
}

fn sdp_with_gain(cfg: &RunConfig, sol: lqrsynth::Result<SdpSolution>, spec: Option<&ConstraintSpec>, out: &mut Outcome) {
    let sol = match sol {
        Ok(sol) => sol,
        Err(e) => return out.fail(&e),
    };
    record_solution(&sol, out);
    out.exit = Exit::of_status(sol.status);
    if sol.status != SdpStatus::Optimal {
        return;
    }
    match recover_gain(&sol, &cfg.model) {
        Ok(gain) => {
            out.verification = Some(verify_design(&cfg.model, &gain, &cfg.cost, &cfg.z_gram, spec));
            out.gain = Some(gain.into_matrix());
        }
        Err(e) => out.fail(&e),
    }
}

fn constrained(cfg: &RunConfig, out: &mut Outcome) {
    let Some(bounds) = &cfg.constraints else {
        return out.fail(&Error::InvalidArgument("constraints are required".into()));
    };
    if let Some(rho) = bounds.rho {
        let solved = out.timed("sdp-constrained", || {
            let spec = ConstraintSpec::new(bounds.gammas.clone(), rho)?;
            let sol = build_sdp_constrained(&cfg.model, &cfg.cost, &cfg.z_gram, &spec).map(|p| solve_sdp(&p));
            Ok::<_, Error>((spec, sol))
        });
        match solved {
            Ok((spec, sol)) => sdp_with_gain(cfg, sol, Some(&spec), out),
            Err(e) => out.fail(&e),
        }
    }
    if let Some(sweep) = &bounds.sweep {
        let points = out.timed("sweep", || {
            let rhos = rho_grid(sweep.lo, sweep.hi, sweep.count)?;
            constrained_sweep(&cfg.model, &cfg.cost, &cfg.z_gram, &bounds.gammas, &rhos)
        });
        match points {
            Ok(points) => {
                let optimal = points.iter().filter(|p| p.status == SdpStatus::Optimal).count();
                if bounds.rho.is_none() {
                    out.status = if optimal > 0 { "swept" } else { "infeasible" }.into();
                    out.message = format!("{optimal} of {} points optimal", points.len());
                    out.objective = points
                        .iter()
                        .filter(|p| p.status == SdpStatus::Optimal)
                        .map(|p| p.objective)
                        .reduce(f64::min);
                }
                if optimal == 0 {
                    out.exit = out.exit.worst(Exit::Solver);
                }
                out.sweep = points;
            }
            Err(e) => out.fail(&e),
        }
    }
}
