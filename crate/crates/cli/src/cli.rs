//! Command-line entry point.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anf_core::grids::test_grid;
use anf_core::metrics::{deviation_metrics, estimated_deviation_metrics, residual_metrics};
use anf_core::problems::{levels, registry, variants, PROBLEM_NAMES};
use anf_core::train::repeat_seed;
use anf_core::{estimate_bound, BoundConfig, BoundResult, Grid, GridKind, Mode, Problem, Schedule, SystemForm};
use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{default_bound_params, RunConfig};
use crate::run::{metric_columns, read_params, run, Batch, ParamRecord};
use crate::solution::emit_solution;

#[derive(Debug, Parser)]
#[command(name = "anf", version, about = "Augmented neural forms for ODE boundary and initial value problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every repeat of an experiment configuration file.
    Run {
        config: PathBuf,
        /// Override a configuration key, e.g. `-o repeats=5`.
        #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train a single solution and print its metrics.
    Solve(SolveArgs),
    /// Estimate the deviation bound of saved parameters.
    Bound(BoundArgs),
    /// List the benchmark problems, their variants and size levels.
    ListProblems,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub problem: String,
    /// Condition variant; the problem's first variant when omitted.
    pub variant: Option<String>,
    #[arg(long, default_value = "augmented")]
    pub method: Mode,
    #[arg(long)]
    pub params: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Size level (low, medium, high) for unset points and params.
    #[arg(long, default_value = "low")]
    pub level: String,
    #[arg(long, default_value = "chebyshev")]
    pub grid: GridKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Optimizer schedule, e.g. `pattern-search:0.2,bfgs:0.8` or `lm`.
    #[arg(long)]
    pub schedule: Option<Schedule>,
    /// Also estimate the bound with this many perturbation parameters.
    #[arg(long, value_name = "N")]
    pub bound: Option<usize>,
    #[arg(long)]
    pub bound_budget: Option<usize>,
    /// Write per-point values on the test grid.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Write the trained parameters as a one-line sidecar.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Parameter sidecar written by `run` or `solve`.
    pub params_file: PathBuf,
    /// Repeat index to load; the first record when omitted.
    #[arg(long)]
    pub repeat: Option<usize>,
    /// Perturbation parameters; a third of the trial's by default.
    #[arg(long)]
    pub bound_params: Option<usize>,
    #[arg(long, default_value_t = anf_core::train::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Seed of the perturbation start; the record's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub schedule: Option<Schedule>,
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

pub fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, overrides } => run_command(config, &overrides),
        Command::Solve(args) => solve_command(&args),
        Command::Bound(args) => bound_command(&args),
        Command::ListProblems => {
            list_problems();
            Ok(())
        }
    }
}

fn run_command(config: PathBuf, overrides: &[String]) -> Result<()> {
    let cfg = RunConfig::from_file(&config, overrides)?;
    let report = run(&cfg)?;
    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("repeat {} (seed {}) failed: {}", r.repeat, r.seed, r.error.as_deref().unwrap_or(""));
    }
    println!("{} repeats, {} failed; results in {}", report.records.len(), report.failed, cfg.output.display());
    Ok(())
}

fn solve_command(a: &SolveArgs) -> Result<()> {
    let mut map = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    put("problem", Some(a.problem.clone()));
    put("variant", a.variant.clone());
    put("method", Some(a.method.as_str().into()));
    put("grid", Some(a.grid.as_str().into()));
    put("level", Some(a.level.clone()));
    put("points", a.points.map(|v| v.to_string()));
    put("params", a.params.map(|v| v.to_string()));
    put("seed", Some(a.seed.to_string()));
    put("budget", a.budget.map(|v| v.to_string()));
    put("restarts", a.restarts.map(|v| v.to_string()));
    put("zeta", a.zeta.map(|v| v.to_string()));
    put("schedule", a.schedule.as_ref().map(|s| s.to_string()));
    put("bound", a.bound.map(|_| "on".into()));
    put("bound_params", a.bound.map(|v| v.to_string()));
    put("bound_budget", a.bound_budget.map(|v| v.to_string()));
    put("repeats", Some("1".into()));
    put("output", Some("-".into()));
    let cfg = RunConfig::from_map(&map)?;

    let problem = cfg.problem()?;
    let template = SystemForm::template(&problem.components, cfg.method, cfg.params)?;
    let train_grid = Grid::new(cfg.grid, problem.a, problem.b, cfg.points)?;
    let test = test_grid(problem.a, problem.b)?;
    let batch = Batch::new(&cfg, &problem, &template, &train_grid, &test);
    // same seed derivation as the first repeat of `run`
    let seed = repeat_seed(cfg.seed, 0);
    let solved = batch.solve(seed)?;

    println!("problem: {} {}", problem.name, problem.variant);
    println!("method: {}  params: {}  points: {} ({})", cfg.method.as_str(), cfg.params, cfg.points, cfg.grid.as_str());
    println!("seed: {seed}  evals: {}", solved.evals);
    for (name, v) in metric_columns(problem.n_components()).iter().zip(&solved.metrics) {
        if let Some(v) = v {
            println!("{name}: {v:.6e}");
        }
    }
    if let Some(b) = &solved.bound {
        print_bound_status(b);
    }
    if let Some(path) = &a.save_params {
        let rec = ParamRecord::new(&cfg, 0, seed, solved.form.params());
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer(&mut w, &rec)?;
        std::io::Write::write_all(&mut w, b"\n")?;
    }
    if let Some(path) = &a.solution {
        write_solution(path, &problem, &solved.form, &test, solved.bound.as_ref())?;
    }
    Ok(())
}

fn bound_command(a: &BoundArgs) -> Result<()> {
    let records = read_params(&a.params_file)?;
    let rec = match a.repeat {
        Some(i) => records.iter().find(|r| r.repeat == i).ok_or_else(|| anyhow!("no record for repeat {i}"))?,
        None => records.first().ok_or_else(|| anyhow!("{} holds no records", a.params_file.display()))?,
    };
    let problem = registry(&rec.problem, &rec.variant)?;
    let method: Mode = rec.method.parse()?;
    let template = SystemForm::template(&problem.components, method, rec.params)?;
    let form = template.with_params(&rec.theta)?;
    let grid = Grid::new(rec.grid.parse()?, problem.a, problem.b, rec.points)?;
    let test = test_grid(problem.a, problem.b)?;
    let k = a.bound_params.unwrap_or_else(|| default_bound_params(rec.params, problem.n_components()));
    let mut bcfg = BoundConfig::new(k, a.budget, a.seed.unwrap_or(rec.seed));
    if let Some(s) = &a.schedule {
        bcfg.schedule = s.clone();
    }
    let b = estimate_bound(&problem, &form, &grid, &test, &bcfg)?;

    println!("problem: {} {}  repeat: {}", problem.name, problem.variant, rec.repeat);
    println!("mse_train: {:.6e}", residual_metrics(&problem, &form, &grid)?.mean);
    print_bound_status(&b);
    if b.valid {
        let est = estimated_deviation_metrics(&b)?;
        println!("msed: {:.6e}  mxed: {:.6e}", est.total.mean, est.total.max);
    }
    if problem.has_exact() {
        let d = deviation_metrics(&problem, &form, &test)?;
        println!("msd_test: {:.6e}  mxd_test: {:.6e}", d.total.mean, d.total.max);
    }
    if let Some(path) = &a.solution {
        write_solution(path, &problem, &form, &test, Some(&b))?;
    }
    Ok(())
}

fn print_bound_status(b: &BoundResult) {
    println!("s2: {:.6e}  delta2: {:.6e}  ratio: {:.4}  evals: {}", b.s2, b.delta2, b.ratio(), b.evals);
    if !b.valid {
        println!("bound: invalid (delta2 >= s2)");
    } else if b.low_confidence {
        println!("bound: valid, low confidence");
    } else {
        println!("bound: valid");
    }
}

fn write_solution(
    path: &PathBuf,
    problem: &Problem,
    form: &SystemForm,
    grid: &Grid,
    bound: Option<&BoundResult>,
) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    emit_solution(problem, form, grid, bound, BufWriter::new(f))
}

fn list_problems() {
    println!("{:<6} {:<22} {:<16} {:<4} {:<14} params", "name", "variants", "domain", "n", "points");
    for name in PROBLEM_NAMES {
        let vs = variants(name).unwrap();
        let p = registry(name, vs[0]).unwrap();
        let l = levels(name).unwrap();
        let join = |v: [usize; 3]| v.map(|x| x.to_string()).join("/");
        println!(
            "{:<6} {:<22} {:<16} {:<4} {:<14} {}",
            name,
            vs.join(","),
            format!("[{}, {}]", p.a, p.b),
            p.n_components(),
            join(l.points),
            join(l.params)
        );
    }
}
