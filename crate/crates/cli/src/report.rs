//! Output files. `report.txt` depends only on the configuration and seed, so
//! repeated runs produce identical bytes; wall-clock times go to `timing.txt`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use lqrsynth::sdp::DesignReport;

use crate::config::RunConfig;
use crate::run::Outcome;

pub const REPORT_FILE: &str = "report.txt";
pub const TIMING_FILE: &str = "timing.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct Report {
    kind: &'static str,
    status: String,
    exit_code: u8,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    riccati_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain: Option<Rows>,
    problem: Problem,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Oracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<Verification>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<SweepRow>,
}

#[derive(Serialize)]
struct Problem {
    n: usize,
    m: usize,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixture_seed: Option<u64>,
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "Q")]
    q: Rows,
    #[serde(rename = "R")]
    r: Rows,
    #[serde(rename = "Z")]
    z: Rows,
    #[serde(rename = "Gamma")]
    gamma: Rows,
    mask: Rows,
    #[serde(skip_serializing_if = "Option::is_none")]
    gammas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Serialize)]
struct Oracle {
    #[serde(rename = "P")]
    p: Rows,
    #[serde(rename = "F")]
    f: Rows,
    trace_pz: f64,
}

#[derive(Serialize)]
struct Verification {
    passed: bool,
    stabilizing: bool,
    radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<InputRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    energy: Vec<EnergyRow>,
}

#[derive(Serialize)]
struct InputRow {
    lambda_max: f64,
    rho: f64,
    pass: bool,
}

#[derive(Serialize)]
struct EnergyRow {
    index: usize,
    energy: f64,
    bound: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SweepRow {
    rho: f64,
    status: String,
    objective: f64,
}

impl From<&DesignReport> for Verification {
    fn from(r: &DesignReport) -> Self {
        Self {
            passed: r.passed(),
            stabilizing: r.stabilizing,
            radius: r.radius,
            cost: r.cost,
            note: r.note.clone(),
            input: r.input.as_ref().map(|i| InputRow {
                lambda_max: i.lambda_max,
                rho: i.rho,
                pass: i.pass,
            }),
            energy: r
                .energies
                .iter()
                .flatten()
                .map(|e| EnergyRow {
                    index: e.index,
                    energy: e.energy,
                    bound: e.bound,
                    pass: e.pass,
                })
                .collect(),
        }
    }
}

/// The TOML body of `report.txt`, preceded by a comment header.
pub fn render_report(cfg: &RunConfig, out: &Outcome) -> Result<String, toml::ser::Error> {
    let model = &cfg.model;
    let report = Report {
        kind: cfg.kind.name(),
        status: out.status.clone(),
        exit_code: out.exit as u8,
        message: out.message.clone(),
        objective: out.objective,
        riccati_cost: out.riccati_cost,
        iterations: out.iterations,
        gain: out.gain.as_ref().map(rows),
        problem: Problem {
            n: model.n(),
            m: model.m(),
            alpha: model.alpha(),
            fixture_seed: cfg.fixture_seed,
            a: rows(model.a()),
            b: rows(model.b()),
            q: rows(cfg.cost.q()),
            r: rows(cfg.cost.r()),
            z: rows(&cfg.z_gram),
            gamma: rows(&cfg.gamma),
            mask: rows(cfg.mask.pattern()),
            gammas: cfg.constraints.as_ref().map(|c| c.gammas.iter().copied().collect()),
            rho: cfg.constraints.as_ref().and_then(|c| c.rho),
        },
        oracle: out.oracle.as_ref().map(|o| Oracle {
            p: rows(&o.p),
            f: rows(&o.gain),
            trace_pz: o.cost,
        }),
        verification: out.verification.as_ref().map(Verification::from),
        sweep: out
            .sweep
            .iter()
            .map(|p| SweepRow {
                rho: p.rho,
                status: p.status.to_string(),
                objective: p.objective,
            })
            .collect(),
    };
    let body = toml::to_string(&report)?;
    Ok(format!(
        "# lqrsynth {} report\n# matrices are row-major; floats round-trip exactly\n\n{body}",
        cfg.kind.name()
    ))
}

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn write_csv(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()
}

pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &Outcome) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let report = render_report(cfg, out).map_err(io::Error::other)?;
    fs::write(dir.join(REPORT_FILE), report)?;

    let mut timing = String::new();
    for (label, elapsed) in &out.timings {
        writeln!(timing, "{label} {:.6}s", elapsed.as_secs_f64()).expect("writing to a String");
    }
    fs::write(dir.join(TIMING_FILE), timing)?;

    if !out.history.is_empty() {
        write_csv(
            &dir.join(HISTORY_FILE),
            &["t", "J", "grad_norm"],
            out.history
                .iter()
                .map(|it| vec![it.t.to_string(), csv_float(it.cost), csv_float(it.grad_norm)]),
        )?;
    }
    if !out.sweep.is_empty() {
        write_csv(
            &dir.join(SWEEP_FILE),
            &["rho", "objective", "status"],
            out.sweep
                .iter()
                .map(|p| vec![csv_float(p.rho), csv_float(p.objective), p.status.to_string()]),
        )?;
    }
    Ok(())
}

/// Short human summary for the terminal.
pub fn summary(cfg: &RunConfig, out: &Outcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}: {}", cfg.kind.name(), out.status);
    if !out.message.is_empty() {
        let _ = writeln!(s, "  {}", out.message);
    }
    if let Some(o) = &out.oracle {
        let _ = writeln!(s, "  P* ={}", o.p);
        let _ = writeln!(s, "  F* ={}", o.gain);
        let _ = writeln!(s, "  trace(P* Z) = {}", o.cost);
        return s;
    }
    if let Some(j) = out.objective {
        let _ = writeln!(s, "  objective = {j}");
    }
    if let Some(j) = out.riccati_cost {
        let _ = writeln!(s, "  riccati   = {j}");
    }
    if let Some(f) = &out.gain {
        let _ = writeln!(s, "  F ={f}");
    }
    if let Some(v) = &out.verification {
        let _ = writeln!(s, "  verification {}", if v.passed() { "passed" } else { "FAILED" });
    }
    if !out.sweep.is_empty() {
        let optimal = out.sweep.iter().filter(|p| p.objective.is_finite()).count();
        let _ = writeln!(s, "  sweep: {optimal}/{} points with an objective", out.sweep.len());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Kind;
    use crate::run::execute;

    const EXAMPLE: &str = r#"
[model]
A = [[1, 1], [0, 1]]
B = [[0], [1]]

[cost]
Q = [[1, 0], [0, 1]]
R = [[0.1]]
"#;

    #[test]
    fn report_is_valid_toml_with_full_precision() {
        let cfg = RunConfig::parse(EXAMPLE, 0, Some(Kind::Oracle)).unwrap();
        let out = execute(&cfg);
        let text = render_report(&cfg, &out).unwrap();
        assert!(text.starts_with("# lqrsynth oracle report\n"));
        let parsed: toml::Table = text.parse().unwrap();
        assert_eq!(parsed["status"].as_str(), Some("optimal"));
        let f = parsed["gain"].as_array().unwrap()[0].as_array().unwrap();
        assert_eq!(f[1].as_float(), Some(out.gain.unwrap()[(0, 1)]));
    }

    #[test]
    fn nan_is_spelled_lowercase() {
        assert_eq!(csv_float(f64::NAN), "nan");
        assert_eq!(csv_float(1.25), "1.25");
    }
}
