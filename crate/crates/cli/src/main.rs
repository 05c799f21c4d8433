mod commands;
mod report;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayeslin::problem::ProblemFile;
use bayeslin::Tol;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use report::{Failure, GridPoint, Meta, Report};

#[derive(Parser, Debug)]
#[command(name = "bayeslin", version, about = "Bayes linear and general ridge estimation on problem files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Relative tolerance for equality verdicts.
    #[arg(long = "tol-eq", global = true)]
    tol_eq: Option<f64>,
    /// Relative singular-value cutoff for numerical rank.
    #[arg(long = "tol-rank", global = true)]
    tol_rank: Option<f64>,
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    /// Grid value for `Omega_affine` problems. Repeatable.
    #[arg(long = "a", global = true, allow_negative_numbers = true)]
    a: Vec<f64>,
    /// Process every `*.json` file in this directory.
    #[arg(long, global = true)]
    batch: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Check a problem file against the model schema.
    Validate(Input),
    /// Block decomposition of Omega and Rao-structure residuals.
    Decompose(Input),
    /// Coefficient map and, when `y` is available, the estimate.
    Estimate(MapInput),
    /// Generalized residual sum of squares of a map at `y`.
    Rss(MapInput),
    /// Whether BL(Omega, K1) and BL(I, K2) agree for every y.
    CheckEqual(CheckInput),
    /// Whether their generalized RSS agree for every y.
    CheckRssEqual(CheckInput),
    /// Estimator and RSS equality together.
    CheckJoint(CheckInput),
    /// Whether the two estimators agree at one `y`.
    Membership(YInput),
    /// Linear sufficiency and completeness of a map.
    Sufficiency(MapInput),
    /// Bayes risk of a map under the problem's prior.
    Risk(RiskInput),
    /// Generate a problem file.
    Simulate(simulate::SimulateArgs),
}

#[derive(Args, Debug, Clone)]
struct Input {
    problem: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BayesLinear,
    BayesLinearAlt,
    GeneralRidge,
    Ols,
    Gls,
    Ridge,
    Shrinkage,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiChoice {
    Identity,
    Omega,
}

#[derive(Args, Debug, Clone)]
pub struct MapSpec {
    #[arg(long, value_enum, default_value = "bayes-linear")]
    pub family: Family,
    #[arg(long, value_enum, default_value = "omega")]
    pub phi: PhiChoice,
    /// `K1`, `K2`, `zero`, `identity` or an inline JSON matrix.
    #[arg(long, default_value = "K1")]
    pub k: String,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Inline JSON vector; overrides the problem's `y`.
    #[arg(long)]
    pub y: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct MapInput {
    problem: Option<PathBuf>,
    #[command(flatten)]
    map: MapSpec,
}

#[derive(Args, Debug, Clone)]
struct CheckInput {
    problem: Option<PathBuf>,
    /// Random probe vectors used to look for witnesses.
    #[arg(long, default_value_t = 100)]
    draws: usize,
}

#[derive(Args, Debug, Clone)]
struct YInput {
    problem: Option<PathBuf>,
    #[arg(long)]
    y: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct RiskInput {
    problem: Option<PathBuf>,
    #[command(flatten)]
    map: MapSpec,
    /// Monte-Carlo draws; omitted means closed form only.
    #[arg(long)]
    draws: Option<usize>,
}

pub struct Context {
    pub tol: Tol,
    pub seed: u64,
}

fn tolerances(cli: &Cli) -> Result<Tol, Failure> {
    let mut tol = Tol::default();
    if let Some(e) = cli.tol_eq {
        tol = tol.with_equality(e);
    }
    if let Some(r) = cli.tol_rank {
        tol = tol.with_rank(r);
    }
    tol.validate()?;
    Ok(tol)
}

fn problem_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Validate(i) | Command::Decompose(i) => i.problem.as_deref(),
        Command::Estimate(i) | Command::Rss(i) | Command::Sufficiency(i) => i.problem.as_deref(),
        Command::CheckEqual(i) | Command::CheckRssEqual(i) | Command::CheckJoint(i) => i.problem.as_deref(),
        Command::Membership(i) => i.problem.as_deref(),
        Command::Risk(i) => i.problem.as_deref(),
        Command::Simulate(_) => None,
    }
}

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate(_) => "validate",
        Command::Decompose(_) => "decompose",
        Command::Estimate(_) => "estimate",
        Command::Rss(_) => "rss",
        Command::CheckEqual(_) => "check-equal",
        Command::CheckRssEqual(_) => "check-rss-equal",
        Command::CheckJoint(_) => "check-joint",
        Command::Membership(_) => "membership",
        Command::Sufficiency(_) => "sufficiency",
        Command::Risk(_) => "risk",
        Command::Simulate(_) => "simulate",
    }
}

fn evaluate(cmd: &Command, p: &ProblemFile, a: Option<f64>, ctx: &Context) -> Result<report::Outcome, Failure> {
    match cmd {
        Command::Validate(_) => commands::validate(p, a, ctx),
        Command::Decompose(_) => commands::decompose(p, a, ctx),
        Command::Estimate(i) => commands::estimate(p, a, &i.map, ctx),
        Command::Rss(i) => commands::rss(p, a, &i.map, ctx),
        Command::CheckEqual(i) => commands::check(p, a, commands::Check::Estimator, i.draws, ctx),
        Command::CheckRssEqual(i) => commands::check(p, a, commands::Check::Rss, i.draws, ctx),
        Command::CheckJoint(i) => commands::check(p, a, commands::Check::Joint, i.draws, ctx),
        Command::Membership(i) => commands::membership(p, a, i.y.as_deref(), ctx),
        Command::Sufficiency(i) => commands::sufficiency(p, a, &i.map, ctx),
        Command::Risk(i) => commands::risk(p, a, &i.map, i.draws, ctx),
        Command::Simulate(_) => unreachable!("simulate takes no problem file"),
    }
}

fn run_file(cli: &Cli, path: &Path, ctx: &Context) -> Result<Report, Failure> {
    let raw = fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display()), Some("problem")))?;
    let text = std::str::from_utf8(&raw).map_err(|e| Failure::new("parse", e.to_string(), Some("problem")))?;
    let p = ProblemFile::from_json(text).map_err(|e| Failure::new("parse", e.to_string(), Some("problem")))?;
    let meta = Meta {
        version: bayeslin::VERSION,
        subcommand: name_of(&cli.command).to_string(),
        tolerances: ctx.tol,
        seed: ctx.seed,
        input_digests: report::input_digests(&raw, &p),
    };
    if cli.a.is_empty() {
        if p.has_parameter() && p.omega.is_none() {
            return Err(Failure::new("invalid-input", "Omega_affine needs at least one --a value", Some("a")));
        }
        return Ok(Report::single(evaluate(&cli.command, &p, None, ctx)?, meta));
    }
    let mut points = Vec::with_capacity(cli.a.len());
    for &a in &cli.a {
        points.push(GridPoint { a, outcome: evaluate(&cli.command, &p, Some(a), ctx)? });
    }
    Ok(Report::grid(points, meta))
}

/// Each file succeeds or fails on its own; order follows the file names.
fn run_batch(cli: &Cli, dir: &Path, ctx: &Context) -> Result<(Value, bool), Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::new("io", format!("{}: {e}", dir.display()), Some("batch")))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.is_file())
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let results: Vec<(String, Result<Report, Failure>)> = files
        .par_iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (name, run_file(cli, f, ctx))
        })
        .collect();
    let all_ok = results.iter().all(|(_, r)| r.is_ok());
    let items: Vec<Value> = results
        .into_iter()
        .map(|(file, r)| match r {
            Ok(rep) => json!({"file": file, "status": 0, "report": rep}),
            Err(f) => {
                let mut v = f.to_json();
                v["file"] = json!(file);
                v["status"] = json!(2);
                v
            }
        })
        .collect();
    Ok((json!({"batch": items, "version": bayeslin::VERSION}), all_ok))
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::new("io", format!("{}: {e}", path.display()), Some("out"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let tol = tolerances(cli)?;
    let ctx = Context { tol, seed: cli.seed };
    if let Command::Simulate(args) = &cli.command {
        let p = simulate::generate(args, &ctx)?;
        emit(cli, &report::render(&p))?;
        return Ok(true);
    }
    if let Some(dir) = &cli.batch {
        if problem_path(&cli.command).is_some() {
            return Err(Failure::new("invalid-input", "give either a problem file or --batch", Some("batch")));
        }
        let (v, ok) = run_batch(cli, dir, &ctx)?;
        emit(cli, &report::render(&v))?;
        return Ok(ok);
    }
    let path = problem_path(&cli.command)
        .ok_or_else(|| Failure::new("invalid-input", "missing problem file", Some("problem")))?;
    let rep = run_file(cli, path, &ctx)?;
    emit(cli, &report::render(&rep))?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let f = Failure::new("usage", e.to_string().trim_end(), None);
            print!("{}", report::render(&f.to_json()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(f) => {
            let text = report::render(&f.to_json());
            if let Some(path) = &cli.out {
                let _ = fs::write(path, &text);
            }
            print!("{text}");
            ExitCode::from(2)
        }
    }
}
