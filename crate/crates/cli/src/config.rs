//! Run configuration: a TOML file with row-major matrices, validated into
//! library types before anything is solved.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use lqrsynth::fixtures::{random_cost, rng, stabilizable_model};
use lqrsynth::linalg::{factor_columns, gram, min_eigenvalue, CostSpec, SystemModel};
use lqrsynth::structured::{GradientMode, Horizon, PgdConfig, StepRule, StructureMask};
use lqrsynth::trajectory::{default_augmented_seeds, DEFAULT_TAIL_EPS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Pgd,
    PgdModelfree,
    Sdp,
    SdpConstrained,
    Dual,
    Oracle,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Pgd => "pgd",
            Kind::PgdModelfree => "pgd-modelfree",
            Kind::Sdp => "sdp",
            Kind::SdpConstrained => "sdp-constrained",
            Kind::Dual => "dual",
            Kind::Oracle => "oracle",
        }
    }

    fn is_sdp(self) -> bool {
        matches!(self, Kind::Sdp | Kind::SdpConstrained | Kind::Dual)
    }
}

/// TOML integers and floats are both accepted as matrix entries.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

type RawMatrix = Vec<Vec<Number>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<Kind>,
    model: RawModel,
    cost: Option<RawCost>,
    excitation: Option<RawExcitation>,
    mask: Option<RawMatrix>,
    pgd: Option<RawPgd>,
    constraints: Option<RawConstraints>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "A")]
    a: Option<RawMatrix>,
    #[serde(rename = "B")]
    b: Option<RawMatrix>,
    alpha: Option<f64>,
    /// `[n, m]`: draw a random stabilizable pair from `--seed`.
    random: Option<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    #[serde(rename = "Q")]
    q: RawMatrix,
    #[serde(rename = "R")]
    r: RawMatrix,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExcitation {
    #[serde(rename = "Z")]
    z_gram: Option<RawMatrix>,
    /// Initial states, one per row.
    z: Option<RawMatrix>,
    #[serde(rename = "Gamma")]
    gamma: Option<RawMatrix>,
    /// Augmented seeds `[x; u]`, one per row.
    v: Option<RawMatrix>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StepKind {
    Armijo,
    Constant,
    Diminishing,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeKind {
    Exact,
    Simulated,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawHorizon {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPgd {
    step: Option<StepKind>,
    step_size: Option<f64>,
    sigma: Option<f64>,
    beta: Option<f64>,
    max_step: Option<f64>,
    max_iter: Option<usize>,
    grad_tol: Option<f64>,
    horizon: Option<RawHorizon>,
    tail_eps: Option<f64>,
    gradient: Option<ModeKind>,
    initial_gain: Option<RawMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    gammas: Vec<Number>,
    rho: Option<f64>,
    /// `[lo, hi, count]`
    rho_sweep: Option<(f64, f64, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct Constraints {
    pub gammas: DVector<f64>,
    pub rho: Option<f64>,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct PgdSettings {
    pub config: PgdConfig,
    pub mode: GradientMode,
    pub initial_gain: DMatrix<f64>,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: Kind,
    pub model: SystemModel,
    pub cost: CostSpec,
    /// Initial states whose Gram matrix is `z_gram`.
    pub states: Vec<DVector<f64>>,
    pub z_gram: DMatrix<f64>,
    pub augmented_seeds: Vec<DVector<f64>>,
    pub gamma: DMatrix<f64>,
    pub mask: StructureMask,
    pub pgd: PgdSettings,
    pub constraints: Option<Constraints>,
    pub output_dir: Option<PathBuf>,
    /// Seed used to draw a random model, when one was requested.
    pub fixture_seed: Option<u64>,
}

fn matrix(field: &str, raw: &RawMatrix) -> Result<DMatrix<f64>, ConfigError> {
    let rows = raw.len();
    if rows == 0 || raw[0].is_empty() {
        return Err(field_error(field, "matrix must be non-empty"));
    }
    let cols = raw[0].len();
    if let Some(i) = raw.iter().position(|r| r.len() != cols) {
        return Err(field_error(
            field,
            format!("row {i} has {} entries, expected {cols}", raw[i].len()),
        ));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| raw[i][j].value());
    if m.iter().any(|v| !v.is_finite()) {
        return Err(field_error(field, "entries must be finite"));
    }
    Ok(m)
}

fn shaped(field: &str, raw: &RawMatrix, rows: usize, cols: usize) -> Result<DMatrix<f64>, ConfigError> {
    let m = matrix(field, raw)?;
    if m.shape() != (rows, cols) {
        return Err(field_error(
            field,
            format!("expected {rows}x{cols} matrix, found {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m)
}

fn rows_as_vectors(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.row_iter().map(|r| r.transpose()).collect()
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// `kind` overrides the file's own `kind` key.
    pub fn load(path: &Path, seed: u64, kind: Option<Kind>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text, seed, kind)?;
        if let Some(dir) = &config.output_dir {
            if dir.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.output_dir = Some(base.join(dir));
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str, seed: u64, kind: Option<Kind>) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::validate(raw, seed, kind)
    }

    fn validate(raw: RawConfig, seed: u64, kind: Option<Kind>) -> Result<Self, ConfigError> {
        let kind = kind
            .or(raw.kind)
            .ok_or_else(|| field_error("kind", "missing; expected one of pgd, pgd-modelfree, sdp, sdp-constrained, dual, oracle"))?;
        let mut fixtures = rng(seed);
        let (model, fixture_seed) = match (&raw.model.random, &raw.model.a, &raw.model.b) {
            (Some([n, m]), None, None) => {
                if *n == 0 || *m == 0 {
                    return Err(field_error("model.random", "dimensions must be positive"));
                }
                (stabilizable_model(&mut fixtures, *n, *m), Some(seed))
            }
            (None, Some(a), Some(b)) => {
                let a = matrix("model.A", a)?;
                let n = a.nrows();
                if a.ncols() != n {
                    return Err(field_error("model.A", format!("must be square, found {}x{}", n, a.ncols())));
                }
                let b = matrix("model.B", b)?;
                if b.nrows() != n {
                    return Err(field_error("model.B", format!("expected {n} rows, found {}", b.nrows())));
                }
                let model = SystemModel::undiscounted(a, b).map_err(|e| field_error("model", e.to_string()))?;
                (model, None)
            }
            (Some(_), _, _) => return Err(field_error("model", "give either random or A and B, not both")),
            _ => return Err(field_error("model", "both A and B are required")),
        };
        let alpha = raw.model.alpha.unwrap_or(1.0);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(field_error("model.alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if kind.is_sdp() && alpha != 1.0 {
            return Err(field_error(
                "model.alpha",
                format!("{} problems are undiscounted and require alpha = 1, got {alpha}", kind.name()),
            ));
        }
        let model = model.with_alpha(alpha).map_err(|e| field_error("model.alpha", e.to_string()))?;
        let (n, m) = (model.n(), model.m());

        let cost = match (&raw.cost, fixture_seed) {
            (Some(c), _) => {
                let q = shaped("cost.Q", &c.q, n, n)?;
                let r = shaped("cost.R", &c.r, m, m)?;
                CostSpec::new(q, r).map_err(|e| field_error("cost", e.to_string()))?
            }
            (None, Some(_)) => random_cost(&mut fixtures, n, m),
            (None, None) => return Err(field_error("cost", "Q and R are required")),
        };

        let exc = raw.excitation.unwrap_or_default();
        let states = match (&exc.z_gram, &exc.z) {
            (Some(_), Some(_)) => return Err(field_error("excitation", "give either Z or z, not both")),
            (Some(z), None) => factor_columns(&shaped("excitation.Z", z, n, n)?),
            (None, Some(z)) => {
                let rows = matrix("excitation.z", z)?;
                if rows.ncols() != n {
                    return Err(field_error("excitation.z", format!("each state needs {n} entries, found {}", rows.ncols())));
                }
                rows_as_vectors(&rows)
            }
            (None, None) => rows_as_vectors(&DMatrix::identity(n, n)),
        };
        let z_gram = match &exc.z_gram {
            Some(z) => shaped("excitation.Z", z, n, n)?,
            None => gram(&states).map_err(|e| field_error("excitation.z", e.to_string()))?,
        };
        if (&z_gram - z_gram.transpose()).amax() > 1e-12 * (1.0 + z_gram.amax()) {
            return Err(field_error("excitation.Z", "must be symmetric"));
        }
        if kind.is_sdp() && !(min_eigenvalue(&z_gram) > 0.0) {
            return Err(field_error("excitation.Z", "must be positive definite for SDP problems"));
        }
        let (augmented_seeds, gamma) = match (&exc.gamma, &exc.v) {
            (Some(_), Some(_)) => return Err(field_error("excitation", "give either Gamma or v, not both")),
            (Some(g), None) => {
                let g = shaped("excitation.Gamma", g, n + m, n + m)?;
                (default_augmented_seeds(&g), g)
            }
            (None, Some(v)) => {
                let rows = matrix("excitation.v", v)?;
                if rows.ncols() != n + m {
                    return Err(field_error("excitation.v", format!("each seed needs {} entries, found {}", n + m, rows.ncols())));
                }
                let seeds = rows_as_vectors(&rows);
                let g = gram(&seeds).map_err(|e| field_error("excitation.v", e.to_string()))?;
                (seeds, g)
            }
            (None, None) => {
                let g = DMatrix::identity(n + m, n + m);
                (default_augmented_seeds(&g), g)
            }
        };

        let mask = match &raw.mask {
            Some(rows) => {
                let pattern = shaped("mask", rows, m, n)?;
                StructureMask::new(pattern).map_err(|e| field_error("mask", e.to_string()))?
            }
            None => StructureMask::full(m, n),
        };

        let explicit_gain = raw.pgd.as_ref().is_some_and(|p| p.initial_gain.is_some());
        let pgd = pgd_settings(raw.pgd.unwrap_or_default(), m, n)?;
        if matches!(kind, Kind::Pgd | Kind::PgdModelfree) && !explicit_gain {
            let radius = model
                .discounted_radius(&pgd.initial_gain)
                .map_err(|e| field_error("pgd.initial_gain", e.to_string()))?;
            if radius >= 1.0 {
                return Err(field_error(
                    "pgd.initial_gain",
                    format!("required: the zero gain is not stabilizing (discounted spectral radius {radius:.6})"),
                ));
            }
        }

        let constraints = match raw.constraints {
            Some(c) => {
                let gammas = DVector::from_iterator(c.gammas.len(), c.gammas.iter().map(|g| g.value()));
                if gammas.len() != n + m {
                    return Err(field_error(
                        "constraints.gammas",
                        format!("expected {} bounds (one per state and input), found {}", n + m, gammas.len()),
                    ));
                }
                for (i, &g) in gammas.iter().enumerate() {
                    positive(&format!("constraints.gammas[{i}]"), g)?;
                }
                let rho = c.rho.map(|r| positive("constraints.rho", r)).transpose()?;
                let sweep = match c.rho_sweep {
                    Some((lo, hi, count)) => {
                        positive("constraints.rho_sweep", lo)?;
                        if !(hi >= lo) || count == 0 {
                            return Err(field_error("constraints.rho_sweep", "expected [lo, hi, count] with lo <= hi and count >= 1"));
                        }
                        Some(Sweep { lo, hi, count })
                    }
                    None => None,
                };
                Some(Constraints { gammas, rho, sweep })
            }
            None => None,
        };
        if kind == Kind::SdpConstrained {
            match &constraints {
                None => return Err(field_error("constraints", "required for sdp-constrained")),
                Some(c) if c.rho.is_none() && c.sweep.is_none() => {
                    return Err(field_error("constraints", "give rho, rho_sweep or both"));
                }
                _ => {}
            }
        }

        Ok(Self {
            kind,
            model,
            cost,
            states,
            z_gram,
            augmented_seeds,
            gamma,
            mask,
            pgd,
            constraints,
            output_dir: raw.output.and_then(|o| o.dir),
            fixture_seed,
        })
    }
}

fn pgd_settings(raw: RawPgd, m: usize, n: usize) -> Result<PgdSettings, ConfigError> {
    let defaults = PgdConfig::default();
    let step_rule = match raw.step.unwrap_or(StepKind::Armijo) {
        StepKind::Armijo => {
            let StepRule::Armijo { sigma, beta, max_step } = StepRule::armijo() else {
                unreachable!()
            };
            StepRule::Armijo {
                sigma: raw.sigma.unwrap_or(sigma),
                beta: raw.beta.unwrap_or(beta),
                max_step: raw.max_step.or(raw.step_size).unwrap_or(max_step),
            }
        }
        StepKind::Constant => StepRule::Constant {
            step: raw.step_size.ok_or_else(|| field_error("pgd.step_size", "required for the constant rule"))?,
        },
        StepKind::Diminishing => StepRule::Diminishing {
            initial: raw.step_size.ok_or_else(|| field_error("pgd.step_size", "required for the diminishing rule"))?,
        },
    };
    let tail_eps = raw.tail_eps.unwrap_or(DEFAULT_TAIL_EPS);
    let horizon = match raw.horizon {
        None => Horizon::Auto { eps: tail_eps },
        Some(RawHorizon::Fixed(steps)) => Horizon::Fixed(steps),
        Some(RawHorizon::Named(s)) if s == "auto" => Horizon::Auto { eps: tail_eps },
        Some(RawHorizon::Named(s)) => {
            return Err(field_error("pgd.horizon", format!("expected a step count or \"auto\", got \"{s}\"")));
        }
    };
    let config = PgdConfig {
        step_rule,
        max_iter: raw.max_iter.unwrap_or(defaults.max_iter),
        grad_tol: raw.grad_tol.unwrap_or(defaults.grad_tol),
        horizon,
        record_history: true,
    };
    config.validate().map_err(|e| field_error("pgd", e.to_string()))?;
    let initial_gain = match &raw.initial_gain {
        Some(g) => shaped("pgd.initial_gain", g, m, n)?,
        None => DMatrix::zeros(m, n),
    };
    Ok(PgdSettings {
        config,
        mode: match raw.gradient.unwrap_or(ModeKind::Exact) {
            ModeKind::Exact => GradientMode::Exact,
            ModeKind::Simulated => GradientMode::Simulated,
        },
        initial_gain,
    })
}
