//! Training errors, the restart pipeline and repeated experiments.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::Grid;
use crate::net::EvalTriple;
use crate::optimize::{Objective, OptConfig, Schedule, StopReason};
use crate::problems::Problem;
use crate::trial::SystemForm;

/// Default evaluation budget per experiment.
pub const DEFAULT_BUDGET: usize = 220_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total objective evaluations, split evenly across restarts.
    pub budget: usize,
    pub restarts: usize,
    pub schedule: Schedule,
    /// Penalty weight for conditions that are not built into the trial.
    pub zeta: f64,
    pub seed: u64,
    /// Tolerances handed to every optimizer stage; its budget is ignored.
    pub opt: OptConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            restarts: 1,
            schedule: Schedule::default(),
            zeta: 1.0,
            seed: 0,
            opt: OptConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            return Err(Error::InvalidConfig(format!("zeta must be non-negative, got {}", self.zeta)));
        }
        OptConfig { budget: 1, ..self.opt }.validate()
    }

    /// Evaluations given to restart `r`.
    pub fn restart_budget(&self, r: usize) -> usize {
        self.budget / self.restarts + usize::from(r < self.budget % self.restarts)
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub form: SystemForm,
    /// Unpenalized training error of `form` (the `s^2` of the bound estimate).
    pub error_final: f64,
    /// Value of the minimized objective at `form`; equals `error_final` unless
    /// conditions are penalized.
    pub objective_final: f64,
    pub evals: usize,
    /// Final objective per restart, in restart order.
    pub restart_errors: Vec<f64>,
    pub best_restart: usize,
    pub reason: StopReason,
    pub wall_time: Duration,
}

fn check_arity(problem: &Problem, sf: &SystemForm) -> Result<()> {
    if sf.len() != problem.n_components() {
        return Err(Error::ComponentMismatch { expected: problem.n_components(), got: sf.len() });
    }
    Ok(())
}

fn check_grid(problem: &Problem, grid: &Grid) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let tol = 1e-12 * (problem.b - problem.a);
    if grid.points().iter().any(|&x| x < problem.a - tol || x > problem.b + tol) {
        return Err(Error::InvalidConfig(format!("grid leaves the problem domain [{}, {}]", problem.a, problem.b)));
    }
    Ok(())
}

/// Mean over `points` of the summed squared residual components, with trial
/// triples supplied per point by `fill`.
///
/// Every training error and the bound objective go through this function so
/// equal trial values give bitwise-equal errors.
pub(crate) fn mean_squared_residual(
    problem: &Problem,
    points: &[f64],
    fill: impl FnMut(usize, f64, &mut [EvalTriple]),
) -> f64 {
    scaled_residuals(problem, points, fill, None)
}

/// As [`mean_squared_residual`], also writing each residual divided by
/// `sqrt(points.len())` into `out` (point-major), so the squares of `out` sum
/// to the returned mean.
pub(crate) fn scaled_residuals(
    problem: &Problem,
    points: &[f64],
    mut fill: impl FnMut(usize, f64, &mut [EvalTriple]),
    mut out: Option<&mut [f64]>,
) -> f64 {
    let mut triples = vec![EvalTriple::ZERO; problem.n_components()];
    let neq = problem.n_equations();
    let mut r = vec![0.0; neq];
    let scale = 1.0 / (points.len() as f64).sqrt();
    let mut sum = 0.0;
    for (i, &x) in points.iter().enumerate() {
        fill(i, x, &mut triples);
        problem.residual_into(x, &triples, &mut r);
        if let Some(o) = out.as_deref_mut() {
            for (slot, v) in o[i * neq..(i + 1) * neq].iter_mut().zip(&r) {
                *slot = v * scale;
            }
        }
        sum += r.iter().map(|v| v * v).sum::<f64>();
    }
    sum / points.len() as f64
}

/// Collocation error: mean over the grid of the summed squared residuals.
pub fn error_nf(problem: &Problem, sf: &SystemForm, grid: &Grid) -> Result<f64> {
    check_arity(problem, sf)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let prepared = sf.prepare()?;
    Ok(mean_squared_residual(problem, grid.points(), |_, x, t| {
        for (slot, p) in t.iter_mut().zip(&prepared) {
            *slot = p.eval(x);
        }
    }))
}

/// Sum of squared violations of conditions the trial does not satisfy by construction.
pub fn penalty_violation(sf: &SystemForm) -> Result<f64> {
    let mut sum = 0.0;
    for c in sf.components().iter().filter(|c| !c.satisfies_conditions_exactly()) {
        sum += c.condition_residuals()?.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(sum)
}

/// Collocation error plus `zeta` times the squared condition violations.
pub fn error_penalty(problem: &Problem, sf: &SystemForm, grid: &Grid, zeta: f64) -> Result<f64> {
    Ok(error_nf(problem, sf, grid)? + zeta * penalty_violation(sf)?)
}

/// The function minimized by [`train`] over flat parameter vectors of
/// `template`'s shape. Failed evaluations map to `+inf`.
///
/// It is also a sum of squares: the collocation residuals scaled by
/// `1 / sqrt(M)`, followed by `sqrt(zeta)` times each penalized condition
/// violation.
#[derive(Debug, Clone, Copy)]
pub struct TrainingObjective<'a> {
    problem: &'a Problem,
    template: &'a SystemForm,
    grid: &'a Grid,
    zeta: f64,
    penalties: usize,
}

impl<'a> TrainingObjective<'a> {
    pub fn new(problem: &'a Problem, template: &'a SystemForm, grid: &'a Grid, zeta: f64) -> Self {
        let penalties = template
            .components()
            .iter()
            .filter(|c| !c.satisfies_conditions_exactly())
            .map(|c| c.condition_residuals().map_or(0, |v| v.len()))
            .sum();
        Self { problem, template, grid, zeta, penalties }
    }

    fn collocation_len(&self) -> usize {
        self.grid.len() * self.problem.n_equations()
    }
}

impl Objective for TrainingObjective<'_> {
    fn value(&self, flat: &[f64]) -> f64 {
        let Ok(sf) = self.template.with_params(flat) else { return f64::INFINITY };
        let e = if self.template.is_penalized() {
            error_penalty(self.problem, &sf, self.grid, self.zeta)
        } else {
            error_nf(self.problem, &sf, self.grid)
        };
        e.unwrap_or(f64::INFINITY)
    }

    fn residual_len(&self) -> Option<usize> {
        Some(self.collocation_len() + self.penalties)
    }

    fn residuals(&self, flat: &[f64], out: &mut [f64]) -> f64 {
        let fail = |out: &mut [f64]| {
            out.fill(f64::INFINITY);
            f64::INFINITY
        };
        let Ok(sf) = self.template.with_params(flat) else { return fail(out) };
        let Ok(prepared) = sf.prepare() else { return fail(out) };
        let (colloc, pen) = out.split_at_mut(self.collocation_len());
        let e = scaled_residuals(
            self.problem,
            self.grid.points(),
            |_, x, t| {
                for (slot, p) in t.iter_mut().zip(&prepared) {
                    *slot = p.eval(x);
                }
            },
            Some(colloc),
        );
        if !sf.is_penalized() {
            return e;
        }
        let mut sum = 0.0;
        let mut k = 0;
        for c in sf.components().iter().filter(|c| !c.satisfies_conditions_exactly()) {
            let Ok(v) = c.condition_residuals() else { return fail(out) };
            for r in v {
                pen[k] = self.zeta.sqrt() * r;
                sum += r * r;
                k += 1;
            }
        }
        e + self.zeta * sum
    }
}

/// The [`TrainingObjective`] for these inputs.
pub fn objective<'a>(
    problem: &'a Problem,
    template: &'a SystemForm,
    grid: &'a Grid,
    zeta: f64,
) -> TrainingObjective<'a> {
    TrainingObjective::new(problem, template, grid, zeta)
}

/// Random starting point of restart `restart` for master seed `seed`.
pub fn initial_form(template: &SystemForm, seed: u64, restart: usize) -> SystemForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    template.randomized(&mut rng)
}

/// Trains `template` on `grid`, keeping the best of `cfg.restarts` restarts.
///
/// With a zero budget the initial form of restart 0 is returned after a
/// single error evaluation.
pub fn train(problem: &Problem, template: &SystemForm, grid: &Grid, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_arity(problem, template)?;
    check_grid(problem, grid)?;
    let start = Instant::now();
    let f = objective(problem, template, grid, cfg.zeta);

    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut restart_errors = Vec::with_capacity(cfg.restarts);
    let mut evals = 0;
    let mut reason = StopReason::Budget;
    for r in 0..cfg.restarts {
        let x0 = initial_form(template, cfg.seed, r).params();
        let budget = cfg.restart_budget(r);
        let (x, fx) = if budget == 0 {
            evals += 1;
            let fx = f.value(&x0);
            (x0, fx)
        } else {
            let out = cfg.schedule.run(&f, &x0, &OptConfig { budget, ..cfg.opt });
            evals += out.evals;
            if best.as_ref().is_none_or(|b| out.f_best < b.2) {
                reason = out.reason;
            }
            (out.x_best, out.f_best)
        };
        restart_errors.push(fx);
        if best.as_ref().is_none_or(|b| fx < b.2) {
            best = Some((r, x, fx));
        }
        if cfg.budget == 0 {
            break;
        }
    }
    let (best_restart, x, objective_final) = best.expect("at least one restart");
    let form = template.with_params(&x)?;
    let error_final = if template.is_penalized() { error_nf(problem, &form, grid)? } else { objective_final };
    Ok(TrainResult {
        form,
        error_final,
        objective_final,
        evals,
        restart_errors,
        best_restart,
        reason,
        wall_time: start.elapsed(),
    })
}

/// Seed of experiment repeat `index` under master seed `master`.
pub fn repeat_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

/// Runs `repeats` independent trainings in parallel; results come back in
/// repeat order regardless of scheduling.
pub fn run_repeats(
    problem: &Problem,
    template: &SystemForm,
    grid: &Grid,
    cfg: &TrainConfig,
    repeats: usize,
) -> Vec<Result<TrainResult>> {
    (0..repeats)
        .into_par_iter()
        .map(|i| train(problem, template, grid, &TrainConfig { seed: repeat_seed(cfg.seed, i), ..cfg.clone() }))
        .collect()
}
