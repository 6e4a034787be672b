//! Subcommand dispatch and result emission.

use crate::analysis::{self, PropertyVerdict, Witness};
use crate::config::{InitialProfile, RunConfig};
use crate::coupling::{self, classify_coupling};
use crate::discretization::DiscreteOperator;
use crate::error::{exit, Error};
use crate::evolution::{self, DenseSemigroup, StateVector, Trajectory};
use crate::linalg::CVector;
use crate::semilinear;
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "netdiff", version, about = "Diffusion on metric graphs with non-local vertex coupling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Second configuration for domination checks.
    #[arg(long, global = true)]
    pub paired: Option<PathBuf>,
    /// Output directory; overrides `run.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Crank–Nicolson trajectory: trajectory.csv and norms.csv.
    Simulate,
    /// Leading eigenvalues and spectral bound: spectrum.json.
    Spectrum,
    /// Heat kernel at `run.times`: kernel.csv.
    Kernel,
    /// Property verdicts: verdicts.jsonl.
    Verify,
    /// Gaussian envelope fit: gaussian_fit.json and gaussian_samples.csv.
    GaussianFit,
    /// IMEX trajectory of the semilinear problem: semilinear.csv.
    Semilinear,
    /// Coupling-matrix classification and contractivity check: check_matrix.json.
    CheckMatrix,
}

/// Outcome of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub all_hold: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.all_hold {
            exit::OK
        } else {
            exit::VERDICT_FAILED
        }
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::PARSE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, &cli.common) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, args: &CommonArgs) -> Result<Outcome, Error> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::Usage("--config <path> is required".into()))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.run.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let paired = args.paired.as_deref().map(RunConfig::from_file).transpose()?;
    let op = cfg.operator()?;
    match command {
        Command::Simulate => simulate(&cfg, &op, &out),
        Command::Spectrum => spectrum(&cfg, &op, &out),
        Command::Kernel => kernel(&cfg, &op, &out),
        Command::Verify => verify(&cfg, &op, paired.as_ref(), &out),
        Command::GaussianFit => gaussian_fit(&cfg, &op, &out),
        Command::Semilinear => run_semilinear(&cfg, &op, &out),
        Command::CheckMatrix => check_matrix(&cfg, &out),
    }
}

/// Initial state built from the `[initial]` section.
pub fn initial_state(cfg: &RunConfig, op: &DiscreteOperator) -> Result<StateVector, Error> {
    let values = match &cfg.initial {
        InitialProfile::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
            CVector::from_fn(op.dofs(), |_, _| Complex64::new(rng.random_range(0.0..=1.0), 0.0))
        }
        InitialProfile::Constant(v) => CVector::from_element(op.dofs(), Complex64::new(*v, 0.0)),
        InitialProfile::Mode(k) => {
            let sg = DenseSemigroup::new(op)?;
            let modes = sg.modes().ok_or_else(|| {
                analysis::AnalysisError::MissingPrerequisite("mode initial data needs a self-adjoint problem".into())
            })?;
            if *k > modes.values.len() {
                return Err(analysis::AnalysisError::TooManyEigenvalues { requested: *k, dofs: op.dofs() }.into());
            }
            modes.vectors.column(k - 1).into_owned()
        }
        InitialProfile::Samples(s) => {
            let edges: Vec<Vec<Complex64>> = s.iter().map(|e| e.iter().map(|&v| Complex64::new(v, 0.0)).collect()).collect();
            op.interpolate(&edges, 1e-9)?
        }
    };
    Ok(StateVector::new(values, 0.0))
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, Error> {
    fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<PathBuf, Error> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write(path, &text)
}

fn write_csv<R: Serialize>(path: PathBuf, rows: impl IntoIterator<Item = R>) -> Result<PathBuf, Error> {
    let io = |e: csv::Error| Error::io(path.display().to_string(), std::io::Error::other(e));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

#[derive(Serialize)]
struct FieldRow {
    time: f64,
    dof: usize,
    x: f64,
    value: f64,
    value_im: f64,
}

#[derive(Serialize)]
struct NormRow {
    time: f64,
    l1: f64,
    l2: f64,
    linf: f64,
}

fn field_rows<'a>(op: &'a DiscreteOperator, traj: &'a Trajectory) -> impl Iterator<Item = FieldRow> + 'a {
    let x = op.stretch();
    traj.states.iter().flat_map(move |s| {
        s.values.iter().enumerate().map(move |(dof, z)| FieldRow {
            time: s.time,
            dof,
            x: x[dof],
            value: z.re,
            value_im: z.im,
        })
    })
}

fn norm_rows(traj: &Trajectory) -> impl Iterator<Item = NormRow> + '_ {
    traj.states.iter().zip(&traj.norms).map(|(s, n)| NormRow {
        time: s.time,
        l1: n.l1,
        l2: n.l2,
        linf: n.linf,
    })
}

fn simulate(cfg: &RunConfig, op: &DiscreteOperator, out: &Path) -> Result<Outcome, Error> {
    let u0 = initial_state(cfg, op)?;
    let traj = evolution::evolve(op, &u0, cfg.run.t_end, cfg.run.dt)?;
    let files = vec![
        write_csv(out.join("trajectory.csv"), field_rows(op, &traj))?,
        write_csv(out.join("norms.csv"), norm_rows(&traj))?,
    ];
    Ok(Outcome { files, all_hold: true })
}

fn spectrum(cfg: &RunConfig, op: &DiscreteOperator, out: &Path) -> Result<Outcome, Error> {
    let report = analysis::spectrum(op, cfg.run.k.min(op.dofs()))?;
    let files = vec![write_json(out.join("spectrum.json"), &report)?];
    Ok(Outcome { files, all_hold: true })
}

#[derive(Serialize)]
struct KernelRow {
    t: f64,
    p: usize,
    q: usize,
    x: f64,
    y: f64,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "K_im")]
    k_im: f64,
}

fn kernel(cfg: &RunConfig, op: &DiscreteOperator, out: &Path) -> Result<Outcome, Error> {
    let mut rows = Vec::new();
    for &t in &cfg.run.times {
        let km = evolution::heat_kernel(op, t)?;
        let n = km.entries.nrows();
        for p in 0..n {
            for q in 0..n {
                let z = km.entries[(p, q)];
                rows.push(KernelRow {
                    t,
                    p,
                    q,
                    x: km.coordinates[p],
                    y: km.coordinates[q],
                    k: z.re,
                    k_im: z.im,
                });
            }
        }
    }
    let files = vec![write_csv(out.join("kernel.csv"), rows)?];
    Ok(Outcome { files, all_hold: true })
}

/// Properties evaluated by `verify`, in emission order.
pub const VERIFY_PROPERTIES: [&str; 7] = [
    "realness",
    "positivity",
    "linf_contractivity",
    "l1_contractivity",
    "self_adjointness",
    "irreducibility",
    "domination",
];

fn verify(cfg: &RunConfig, op: &DiscreteOperator, paired: Option<&RunConfig>, out: &Path) -> Result<Outcome, Error> {
    let run = &cfg.run;
    for p in &run.properties {
        if !VERIFY_PROPERTIES.contains(&p.as_str()) {
            return Err(crate::config::ConfigError::Validation {
                key: "run.properties".into(),
                line: None,
                message: format!("unknown property `{p}`"),
            }
            .into());
        }
    }
    let wanted = |p: &str| run.properties.is_empty() || run.properties.iter().any(|q| q == p);
    let (grid, seed, samples, tol) = (&run.times, run.seed, run.samples, run.tolerance);
    let mut verdicts: Vec<PropertyVerdict> = Vec::new();
    if wanted("realness") {
        verdicts.push(analysis::verify_realness(op, grid, samples, seed, tol)?);
    }
    if wanted("positivity") {
        verdicts.push(analysis::verify_positivity(op, grid, tol)?);
    }
    if wanted("linf_contractivity") {
        verdicts.push(analysis::verify_linf_contractivity(op, grid, samples, seed, tol)?);
    }
    if wanted("l1_contractivity") {
        verdicts.push(analysis::verify_l1_contractivity(op, grid, samples, seed, tol)?);
    }
    if wanted("self_adjointness") {
        verdicts.push(analysis::verify_self_adjointness(op, grid, tol)?);
    }
    if wanted("irreducibility") {
        let t = grid.iter().copied().fold(f64::NAN, f64::max);
        let t = if t.is_nan() { 0.5 } else { t };
        verdicts.push(match analysis::irreducibility_probe(op, t, tol) {
            Ok(v) => v,
            Err(analysis::AnalysisError::NotPositive { t, value }) => PropertyVerdict {
                property: "irreducibility".into(),
                holds: false,
                tolerance: tol,
                witness: Some(Witness { t, row: None, col: None, value }),
                flag: Some("kernel is not positive".into()),
                params: json!({"t": t}),
            },
            Err(e) => return Err(e.into()),
        });
    }
    if let Some(other) = paired.filter(|_| wanted("domination")) {
        let op_other = other.operator()?;
        let v = if other.dirichlet_enforced {
            analysis::verify_coupling_domination(&op_other, op, grid, tol)?
        } else {
            analysis::verify_domination(op, &op_other, grid, tol)?
        };
        verdicts.push(v);
    }
    let mut text = String::new();
    for v in &verdicts {
        text.push_str(&v.to_json_line());
        text.push('\n');
    }
    let files = vec![write(out.join("verdicts.jsonl"), &text)?];
    Ok(Outcome {
        files,
        all_hold: verdicts.iter().all(|v| v.holds),
    })
}

#[derive(Serialize)]
struct GaussianRow {
    t: f64,
    x: f64,
    y: f64,
    #[serde(rename = "K")]
    k: f64,
    bound: f64,
    holdout: bool,
}

fn gaussian_fit(cfg: &RunConfig, op: &DiscreteOperator, out: &Path) -> Result<Outcome, Error> {
    let fit = analysis::fit_gaussian_envelope(op, &cfg.run.times, cfg.run.quantile)?;
    let holds = fit.coverage >= cfg.run.coverage_target;
    let summary = json!({
        "fit": &fit,
        "times": &cfg.run.times,
        "quantile": cfg.run.quantile,
        "coverage_target": cfg.run.coverage_target,
        "holds": holds,
    });
    let rows = fit.samples.iter().map(|s| GaussianRow {
        t: s.t,
        x: s.x,
        y: s.y,
        k: s.k,
        bound: fit.bound(s.t, s.x, s.y),
        holdout: s.holdout,
    });
    let files = vec![
        write_json(out.join("gaussian_fit.json"), &summary)?,
        write_csv(out.join("gaussian_samples.csv"), rows)?,
    ];
    Ok(Outcome { files, all_hold: holds })
}

fn run_semilinear(cfg: &RunConfig, op: &DiscreteOperator, out: &Path) -> Result<Outcome, Error> {
    let section = cfg.semilinear.as_ref().ok_or_else(|| crate::config::ConfigError::Validation {
        key: "semilinear".into(),
        line: None,
        message: "the semilinear subcommand needs a [semilinear] section".into(),
    })?;
    let u0 = initial_state(cfg, op)?;
    let traj = semilinear::solve_semilinear(op, &section.psi, &u0, cfg.run.t_end, cfg.run.dt, section.blowup_cap)?;
    let files = vec![write_csv(out.join("semilinear.csv"), field_rows(op, &traj))?];
    Ok(Outcome { files, all_hold: true })
}

fn check_matrix(cfg: &RunConfig, out: &Path) -> Result<Outcome, Error> {
    let b = &cfg.coupling;
    let tol = cfg.run.tolerance;
    let report = classify_coupling(b, tol);
    let grid = coupling::default_contractivity_grid();
    let linf = coupling::verify_matrix_linf_contractivity(b, &grid, cfg.run.samples, cfg.run.seed);
    let l1 = coupling::verify_matrix_l1_contractivity(b, &grid);
    // the row and column criteria are exact characterizations, so the
    // classification and the semigroup check must agree
    let agree = report.row_criterion == linf.holds && report.column_criterion == l1;
    let summary = json!({
        "report": &report,
        "linf_contractivity": &linf,
        "l1_contractive": l1,
        "criteria_agree": agree,
        "t_grid": {"min": grid[0], "max": grid[grid.len() - 1], "points": grid.len()},
        "seed": cfg.run.seed,
    });
    let files = vec![write_json(out.join("check_matrix.json"), &summary)?];
    Ok(Outcome { files, all_hold: agree })
}
