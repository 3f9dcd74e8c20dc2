use std::cell::RefCell;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use laplace_ode::laplacian::validate_laplacian;
use laplace_ode::models::{catalog_ids, load_problem, lookup, ModelCatalogEntry};
use laplace_ode::structure::{verify_representation, SampleDomain};
use laplace_ode::{integrate, Error, ExpMode, IntegrateOptions, MethodId, Vector};
use serde::Serialize;

use crate::convergence::{
    compute_reference, convergence_tables, default_reference_h, dyadic_grid, ConvergenceStudy, ErrorNorm,
};
use crate::error::{CliError, EXIT_USAGE};
use crate::format::{file_stem, fmt_f64, to_json, write_text};
use crate::report::{invariants_csv, trajectory_csv, RunReport};

/// Overrides `--out-dir` when set.
pub const OUT_ENV: &str = "LAPLACE_ODE_OUT";

/// Residual allowed between the factored and the original right-hand side in `validate`.
pub const REPRESENTATION_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "laplace-ode",
    version,
    about = "Positivity-preserving integrators for graph-Laplacian ODE systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one model with one method and write the trajectory and a report.
    Run(RunArgs),
    /// Error against a fine reference over a dyadic step grid.
    Convergence(ConvergenceArgs),
    /// Per-step drift of every declared linear invariant.
    Invariants(RunArgs),
    /// Catalog models.
    List(ListArgs),
    /// Schema, sign pattern and representation checks for a problem file.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Accurate,
    Pade2,
}

impl From<ModeArg> for ExpMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Accurate => ExpMode::Accurate,
            ModeArg::Pade2 => ExpMode::PadePositive,
        }
    }
}

fn parse_method(s: &str) -> Result<MethodId, String> {
    s.parse::<MethodId>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Catalog id (see `list`).
    #[arg(long, conflicts_with = "problem_file", required_unless_present = "problem_file")]
    pub model: Option<String>,
    /// JSON problem file.
    #[arg(long)]
    pub problem_file: Option<PathBuf>,
    /// Final time, replacing the model's.
    #[arg(long)]
    pub tf: Option<f64>,
    /// Permit matrices without the Laplacian sign pattern.
    #[arg(long)]
    pub allow_nonlaplacian: bool,
    /// Abort when an EM3 combination loses the sign pattern.
    #[arg(long)]
    pub strict_positivity: bool,
    #[arg(long, value_enum, default_value = "accurate")]
    pub mode: ModeArg,
    #[arg(long, default_value = "laplace-ode-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_method)]
    pub method: MethodId,
    #[arg(long)]
    pub h: f64,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated methods.
    #[arg(long, value_parser = parse_method, value_delimiter = ',', required = true)]
    pub method: Vec<MethodId>,
    /// Coarsest step; the model's default when omitted.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Number of halvings after `h0`.
    #[arg(long)]
    pub levels: Option<usize>,
    /// One-based components entering the error, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub components: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_method, default_value = "em3")]
    pub reference_method: MethodId,
    #[arg(long)]
    pub reference_h: Option<f64>,
    /// Absolute instead of relative 2-norm error.
    #[arg(long)]
    pub absolute: bool,
}

#[derive(Debug, Args)]
pub struct ListArgs {
    /// Include models that are not in Laplacian form.
    #[arg(long)]
    pub allow_nonlaplacian: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// JSON problem file.
    #[arg(required_unless_present = "problem_file")]
    pub path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    pub problem_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Invariants(a) => cmd_invariants(a),
        Command::List(a) => {
            print!("{}", list_text(a.allow_nonlaplacian)?);
            Ok(())
        }
        Command::Validate(a) => {
            let path = a
                .path
                .as_ref()
                .or(a.problem_file.as_ref())
                .expect("clap requires a path");
            let outcome = validate_file(path, a.samples, a.seed)?;
            print!("{}", to_json(&outcome));
            Ok(())
        }
    }
}

fn out_dir(flag: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Catalog entry or loaded file, with the final time applied.
pub fn resolve_model(m: &ModelArgs) -> Result<ModelCatalogEntry, CliError> {
    let mut entry = match (&m.model, &m.problem_file) {
        (Some(id), _) => lookup(id, m.allow_nonlaplacian).map_err(|e| match e {
            Error::Domain(msg) => CliError::Usage(msg),
            other => CliError::Core(other),
        })?,
        (None, Some(path)) => load_problem(path)?,
        (None, None) => return Err(CliError::Usage("pass --model or --problem-file".into())),
    };
    if let Some(tf) = m.tf {
        let t0 = entry.problem.t0;
        if !(tf > t0) || !tf.is_finite() {
            return Err(CliError::Usage(format!(
                "--tf must exceed the initial time {t0}, got {tf}"
            )));
        }
        entry.problem = entry.problem.with_span(t0, tf);
    }
    Ok(entry)
}

pub fn options(m: &ModelArgs) -> IntegrateOptions {
    IntegrateOptions {
        check_structure: !m.allow_nonlaplacian,
        strict_positivity: m.strict_positivity,
        ..IntegrateOptions::with_mode(m.mode.into())
    }
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let h = positive("--h", a.h)?;
    let entry = resolve_model(&a.model)?;
    let traj = integrate(&entry.problem, a.method, h, &options(&a.model))?;
    let report = RunReport::new(&entry, &traj);
    let dir = out_dir(&a.model.out_dir);
    let stem = format!("{}_{}", file_stem(&entry.id), a.method.name());
    write_text(&dir, &format!("{stem}_trajectory.csv"), &trajectory_csv(&entry, &traj))?;
    write_text(&dir, &format!("{stem}_report.json"), &to_json(&report))?;
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_invariants(a: &RunArgs) -> Result<(), CliError> {
    let h = positive("--h", a.h)?;
    let entry = resolve_model(&a.model)?;
    let traj = integrate(&entry.problem, a.method, h, &options(&a.model))?;
    let report = RunReport::new(&entry, &traj);
    let dir = out_dir(&a.model.out_dir);
    let stem = format!("{}_{}", file_stem(&entry.id), a.method.name());
    write_text(&dir, &format!("{stem}_invariants.csv"), &invariants_csv(&entry, &traj))?;
    for inv in &report.invariants {
        println!(
            "{} initial={} max_drift={} max_relative_drift={}",
            inv.label,
            fmt_f64(inv.initial),
            fmt_f64(inv.max_drift),
            fmt_f64(inv.max_relative_drift)
        );
    }
    Ok(())
}

/// Builds the study described by `a` without writing anything.
pub fn convergence_study(a: &ConvergenceArgs) -> Result<(ModelCatalogEntry, ConvergenceStudy), CliError> {
    let entry = resolve_model(&a.model)?;
    let controls = &entry.reference;
    let h0 = a.h0.unwrap_or(controls.h0);
    let hs = dyadic_grid(h0, a.levels.unwrap_or(controls.levels))?;
    let mut norm = ErrorNorm::from_controls(controls);
    if let Some(c) = &a.components {
        if c.contains(&0) {
            return Err(CliError::Usage("components are numbered from 1".into()));
        }
        norm.components = Some(c.iter().map(|i| i - 1).collect());
    }
    if a.absolute {
        norm.relative = false;
    }
    norm.check(entry.problem.dim())?;
    let h_ref = match a.reference_h {
        Some(h) => positive("--reference-h", h)?,
        None => default_reference_h(controls, &hs),
    };
    let opts = options(&a.model);
    let reference = compute_reference(&entry.problem, a.reference_method, h_ref, &opts, &norm)?;
    let tables = convergence_tables(&entry, &reference, &a.method, &hs, &opts, &norm);
    let study = ConvergenceStudy::new(&entry, &norm, &reference, tables);
    Ok((entry, study))
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<(), CliError> {
    let (entry, study) = convergence_study(a)?;
    let dir = out_dir(&a.model.out_dir);
    let stem = file_stem(&entry.id);
    for t in &study.tables {
        write_text(&dir, &format!("{stem}_{}_convergence.csv", t.method), &t.to_csv())?;
    }
    write_text(&dir, &format!("{stem}_convergence.json"), &to_json(&study))?;
    println!(
        "reference {} h={} floor={}",
        study.reference.method,
        fmt_f64(study.reference.h),
        fmt_f64(study.reference.floor)
    );
    for t in &study.tables {
        let order = t.fitted_order.map(fmt_f64).unwrap_or_else(|| "n/a".into());
        println!("{} order={} points={}", t.method, order, t.fit_points);
    }
    Ok(())
}

pub fn list_text(include_nonlaplacian: bool) -> Result<String, CliError> {
    let mut out = format!(
        "{:<18} {:>4}  {:<10}  {:<6}  {}\n",
        "id", "dim", "autonomous", "strict", "description"
    );
    for id in catalog_ids(include_nonlaplacian) {
        let e = lookup(id, include_nonlaplacian)?;
        let yes = |b: bool| if b { "yes" } else { "no" };
        out.push_str(&format!(
            "{:<18} {:>4}  {:<10}  {:<6}  {}\n",
            e.id,
            e.problem.dim(),
            yes(e.problem.autonomous),
            yes(e.strict()),
            e.description
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationOutcome {
    pub id: String,
    pub dim: usize,
    pub strict: bool,
    pub autonomous: bool,
    pub samples: usize,
    pub worst_violation: f64,
    /// `max ‖A(t, y)y − f(t, y)‖ / (1 + ‖f‖)` when the file gives `f` independently.
    pub representation_residual: Option<f64>,
    pub ok: bool,
}

/// Loads `path`, checks the sign pattern (and zero column sums when strict)
/// at the initial point and at random states, and compares the factored form
/// with the original right-hand side when both are available.
pub fn validate_file(path: &Path, samples: usize, seed: u64) -> Result<ValidationOutcome, CliError> {
    let entry = load_problem(path)?;
    let p = &entry.problem;
    p.validate()?;
    let failure: RefCell<Option<String>> = RefCell::new(None);
    let worst = RefCell::new(0.0f64);
    let checked = |t: f64, y: &Vector| {
        let m = p.matrix(t, y);
        match validate_laplacian(&m, p.strict, p.tol) {
            Ok(r) => {
                let mut w = worst.borrow_mut();
                *w = w.max(r.worst());
                if !r.ok && failure.borrow().is_none() {
                    *failure.borrow_mut() = Some(format!("A(t = {t}, y = {:?}): {}", y.as_slice(), r.summary()));
                }
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e.to_string());
            }
        }
        m
    };
    checked(p.t0, &p.y0);
    let domain = SampleDomain::around(&p.y0).with_times(p.t0, p.tf);
    let residual = match &entry.explicit_rhs {
        Some(f) => {
            let r = verify_representation(|t, y| f.eval(t, y), checked, &domain, samples, seed)?;
            Some(r.max_residual)
        }
        None => {
            verify_representation(|t, y| p.rhs(t, y), checked, &domain, samples, seed)?;
            None
        }
    };
    if let Some(msg) = failure.into_inner() {
        return Err(Error::Structure(msg).into());
    }
    if let Some(r) = residual.filter(|r| !(*r <= REPRESENTATION_TOL)) {
        return Err(Error::Structure(format!(
            "A(t, y)y differs from the right-hand side by {r:e} (relative), above {REPRESENTATION_TOL:e}"
        ))
        .into());
    }
    Ok(ValidationOutcome {
        id: entry.id.clone(),
        dim: p.dim(),
        strict: p.strict,
        autonomous: p.autonomous,
        samples,
        worst_violation: worst.into_inner(),
        representation_residual: residual,
        ok: true,
    })
}
