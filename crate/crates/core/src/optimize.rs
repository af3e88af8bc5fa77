//! Unconstrained minimizers over flat parameter vectors: pattern search by
//! alternating variables, Nelder–Mead, BFGS with finite-difference gradients
//! and Levenberg–Marquardt for sum-of-squares objectives. Every objective call
//! counts against the budget.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar objective, optionally exposed as a sum of squared residuals.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Length of the residual vector, when the objective is a sum of squares.
    fn residual_len(&self) -> Option<usize> {
        None
    }

    /// Fills `r` and returns the objective, which must equal `sum r_i^2` up
    /// to rounding. Only called when `residual_len` is `Some`.
    fn residuals(&self, x: &[f64], r: &mut [f64]) -> f64 {
        let _ = r;
        self.value(x)
    }
}

impl<F: Fn(&[f64]) -> f64 + ?Sized> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Sum-of-squares objective from a closure writing `len` residuals.
pub struct LeastSquares<R> {
    len: usize,
    residuals: R,
}

impl<R: Fn(&[f64], &mut [f64])> LeastSquares<R> {
    pub fn new(len: usize, residuals: R) -> Self {
        Self { len, residuals }
    }
}

impl<R: Fn(&[f64], &mut [f64])> Objective for LeastSquares<R> {
    fn value(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.len];
        self.residuals(x, &mut r)
    }

    fn residual_len(&self) -> Option<usize> {
        Some(self.len)
    }

    fn residuals(&self, x: &[f64], r: &mut [f64]) -> f64 {
        (self.residuals)(x, r);
        r.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Budget,
    FTol,
    XTol,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Budget => "budget",
            StopReason::FTol => "ftol",
            StopReason::XTol => "xtol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptConfig {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Relative objective-improvement tolerance.
    pub f_tol: f64,
    /// Relative step-size tolerance.
    pub x_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { budget: 220_000, f_tol: 1e-14, x_tol: 1e-12, fd_step: f64::EPSILON.cbrt() }
    }
}

impl OptConfig {
    pub fn with_budget(budget: usize) -> Self {
        Self { budget, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidConfig("optimizer budget must be at least 1".into()));
        }
        for (name, v) in [("f_tol", self.f_tol), ("x_tol", self.x_tol), ("fd_step", self.fd_step)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_best: Vec<f64>,
    /// Objective at `x_best`; infinite when nothing was evaluated.
    pub f_best: f64,
    pub evals: usize,
    pub converged: bool,
    pub reason: StopReason,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    PatternSearch,
    NelderMead,
    Bfgs,
    /// Falls back to BFGS when the objective exposes no residuals.
    LevenbergMarquardt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PatternSearch => "pattern-search",
            Method::NelderMead => "nelder-mead",
            Method::Bfgs => "bfgs",
            Method::LevenbergMarquardt => "lm",
        }
    }

    pub fn run<F: Objective + ?Sized>(self, f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
        match self {
            Method::PatternSearch => pattern_search(f, x0, cfg),
            Method::NelderMead => nelder_mead(f, x0, cfg),
            Method::Bfgs => bfgs(f, x0, cfg),
            Method::LevenbergMarquardt => levenberg_marquardt(f, x0, cfg),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pattern-search" | "ps" | "pattern" => Ok(Method::PatternSearch),
            "nelder-mead" | "nm" | "simplex" => Ok(Method::NelderMead),
            "bfgs" => Ok(Method::Bfgs),
            "lm" | "levenberg-marquardt" => Ok(Method::LevenbergMarquardt),
            other => Err(Error::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Optimizer stages run back to back, each getting a fraction of the budget and
/// starting from the previous stage's best point.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    stages: Vec<(Method, f64)>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { stages: vec![(Method::PatternSearch, 0.2), (Method::Bfgs, 0.8)] }
    }
}

impl Schedule {
    pub fn new(stages: Vec<(Method, f64)>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidConfig("optimizer schedule is empty".into()));
        }
        if stages.iter().any(|&(_, w)| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("schedule fractions must be non-negative".into()));
        }
        let total: f64 = stages.iter().map(|s| s.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("schedule fractions sum to zero".into()));
        }
        Ok(Self { stages: stages.into_iter().map(|(m, w)| (m, w / total)).collect() })
    }

    pub fn single(method: Method) -> Self {
        Self { stages: vec![(method, 1.0)] }
    }

    pub fn stages(&self) -> &[(Method, f64)] {
        &self.stages
    }

    /// Splits `budget` over the stages; the last stage takes the rounding remainder.
    pub fn split_budget(&self, budget: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.stages.iter().map(|&(_, w)| (w * budget as f64).floor() as usize).collect();
        let used: usize = out.iter().sum();
        *out.last_mut().expect("non-empty") += budget - used.min(budget);
        out
    }

    pub fn run<F: Objective + ?Sized>(&self, f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
        let mut result = OptResult {
            x_best: x0.to_vec(),
            f_best: f64::INFINITY,
            evals: 0,
            converged: false,
            reason: StopReason::Budget,
            history: Vec::new(),
        };
        for (&(method, _), budget) in self.stages.iter().zip(self.split_budget(cfg.budget)) {
            if budget == 0 {
                continue;
            }
            let stage = method.run(f, &result.x_best, &OptConfig { budget, ..*cfg });
            result.evals += stage.evals;
            result.reason = stage.reason;
            result.converged = stage.converged;
            if stage.f_best <= result.f_best {
                result.f_best = stage.f_best;
                result.x_best = stage.x_best;
            }
            let best = result.f_best;
            result.history.extend(stage.history.into_iter().map(|h| h.min(best)));
        }
        // stage histories restart at each stage's own start; keep them monotone overall
        let mut run_min = f64::INFINITY;
        for h in &mut result.history {
            run_min = run_min.min(*h);
            *h = run_min;
        }
        result
    }
}

/// `method[:fraction]` stages separated by commas, e.g.
/// `pattern-search:0.2,bfgs:0.8` or `lm`. Missing fractions count as 1.
impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split(',')
            .map(|stage| {
                let (name, weight) = match stage.split_once(':') {
                    Some((n, w)) => (
                        n,
                        w.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidConfig(format!("bad schedule fraction in `{stage}`")))?,
                    ),
                    None => (stage, 1.0),
                };
                Ok((name.parse::<Method>()?, weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(stages)
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (m, w)) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{w}", m.as_str())?;
        }
        Ok(())
    }
}

/// Raised when the evaluation budget runs out.
#[derive(Debug, Clone, Copy)]
struct Exhausted;

type Step<T> = std::result::Result<T, Exhausted>;

/// Objective wrapper that counts calls and remembers the best point.
struct Counted<'f, F: ?Sized> {
    f: &'f F,
    evals: usize,
    budget: usize,
    best_x: Vec<f64>,
    best_f: f64,
    history: Vec<f64>,
}

impl<'f, F: Objective + ?Sized> Counted<'f, F> {
    fn new(f: &'f F, x0: &[f64], budget: usize) -> Self {
        Self { f, evals: 0, budget, best_x: x0.to_vec(), best_f: f64::INFINITY, history: Vec::new() }
    }

    fn eval(&mut self, x: &[f64]) -> Step<f64> {
        if self.evals >= self.budget {
            return Err(Exhausted);
        }
        self.evals += 1;
        let v = self.f.value(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x.copy_from_slice(x);
        }
        Ok(v)
    }

    fn residuals(&mut self, x: &[f64], r: &mut [f64]) -> Step<f64> {
        if self.evals >= self.budget {
            return Err(Exhausted);
        }
        self.evals += 1;
        let v = self.f.residuals(x, r);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x.copy_from_slice(x);
        }
        Ok(v)
    }

    fn mark_iteration(&mut self) {
        self.history.push(self.best_f);
    }

    fn finish(self, reason: StopReason) -> OptResult {
        OptResult {
            x_best: self.best_x,
            f_best: self.best_f,
            evals: self.evals,
            converged: reason != StopReason::Budget,
            reason,
            history: self.history,
        }
    }
}

fn finish<F: Objective + ?Sized>(c: Counted<'_, F>, r: Step<StopReason>) -> OptResult {
    c.finish(r.unwrap_or(StopReason::Budget))
}

#[inline]
fn scale(v: f64) -> f64 {
    v.abs().max(1.0)
}

/// Coordinate-wise exploratory search: each variable is probed along its last
/// successful direction, then the opposite one; the step doubles on success
/// and halves on failure.
pub fn pattern_search<F: Objective + ?Sized>(f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
    let mut c = Counted::new(f, x0, cfg.budget);
    let r = pattern_search_inner(&mut c, x0, cfg);
    finish(c, r)
}

fn pattern_search_inner<F: Objective + ?Sized>(
    c: &mut Counted<'_, F>,
    x0: &[f64],
    cfg: &OptConfig,
) -> Step<StopReason> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = c.eval(&x)?;
    if n == 0 {
        return Ok(StopReason::XTol);
    }
    let mut step: Vec<f64> = x0.iter().map(|&v| 0.1 * scale(v)).collect();
    let mut dir = vec![1.0; n];
    loop {
        for i in 0..n {
            let orig = x[i];
            let mut moved = false;
            for sign in [dir[i], -dir[i]] {
                x[i] = orig + sign * step[i];
                let ft = c.eval(&x)?;
                if ft < fx {
                    fx = ft;
                    dir[i] = sign;
                    moved = true;
                    break;
                }
            }
            if moved {
                step[i] *= 2.0;
            } else {
                x[i] = orig;
                step[i] *= 0.5;
            }
        }
        c.mark_iteration();
        if step.iter().zip(&x).all(|(&s, &v)| s <= cfg.x_tol * scale(v)) {
            return Ok(StopReason::XTol);
        }
    }
}

/// Nelder–Mead simplex with reflection 1, expansion 2, contraction 0.5 and
/// shrink 0.5.
pub fn nelder_mead<F: Objective + ?Sized>(f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
    let mut c = Counted::new(f, x0, cfg.budget);
    let r = nelder_mead_inner(&mut c, x0, cfg);
    finish(c, r)
}

fn nelder_mead_inner<F: Objective + ?Sized>(c: &mut Counted<'_, F>, x0: &[f64], cfg: &OptConfig) -> Step<StopReason> {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    let f0 = c.eval(x0)?;
    if n == 0 {
        return Ok(StopReason::XTol);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += 0.05 * scale(x0[i]);
        let fv = c.eval(&v)?;
        simplex.push((v, fv));
    }

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    loop {
        simplex.sort_by(|p, q| p.1.total_cmp(&q.1));
        c.mark_iteration();

        let (f_lo, f_hi) = (simplex[0].1, simplex[n].1);
        if (f_hi - f_lo).abs() <= cfg.f_tol * (f_lo.abs() + f_hi.abs()) + f64::MIN_POSITIVE {
            return Ok(StopReason::FTol);
        }
        let lo = &simplex[0].0;
        let diameter =
            simplex[1..].iter().flat_map(|(v, _)| v.iter().zip(lo).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let xs = lo.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if diameter <= cfg.x_tol * xs {
            return Ok(StopReason::XTol);
        }

        centroid.iter_mut().for_each(|v| *v = 0.0);
        for (v, _) in &simplex[..n] {
            for (cj, vj) in centroid.iter_mut().zip(v) {
                *cj += vj;
            }
        }
        centroid.iter_mut().for_each(|v| *v /= n as f64);

        let along = |out: &mut [f64], t: f64, worst: &[f64]| {
            for ((o, &cj), &wj) in out.iter_mut().zip(&centroid).zip(worst) {
                *o = cj + t * (cj - wj);
            }
        };

        along(&mut trial, ALPHA, &simplex[n].0);
        let fr = c.eval(&trial)?;
        if fr < f_lo {
            along(&mut trial2, GAMMA, &simplex[n].0);
            let fe = c.eval(&trial2)?;
            simplex[n] = if fe < fr { (trial2.clone(), fe) } else { (trial.clone(), fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), fr);
            continue;
        }
        // contraction: outside if the reflection beat the worst point, inside otherwise
        let (t, bar) = if fr < f_hi { (RHO * ALPHA, fr) } else { (-RHO, f_hi) };
        along(&mut trial2, t, &simplex[n].0);
        let fc = c.eval(&trial2)?;
        let accept = if t > 0.0 { fc <= bar } else { fc < bar };
        if accept {
            simplex[n] = (trial2.clone(), fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (vj, bj) in v.iter_mut().zip(&best) {
                *vj = bj + SIGMA * (*vj - bj);
            }
            *fv = c.eval(v)?;
        }
    }
}

/// Central-difference gradient with per-coordinate step `h_rel * max(1, |x_i|)`.
pub fn fd_gradient<F: Objective + ?Sized>(f: &F, x: &[f64], h_rel: f64) -> Vec<f64> {
    let mut c = Counted::new(f, x, usize::MAX);
    let mut g = vec![0.0; x.len()];
    fd_gradient_counted(&mut c, x, h_rel, &mut g).expect("unbounded budget");
    g
}

fn fd_gradient_counted<F: Objective + ?Sized>(
    c: &mut Counted<'_, F>,
    x: &[f64],
    h_rel: f64,
    g: &mut [f64],
) -> Step<()> {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = h_rel * scale(x[i]);
        xp[i] = x[i] + h;
        let fp = c.eval(&xp)?;
        xp[i] = x[i] - h;
        let fm = c.eval(&xp)?;
        xp[i] = x[i];
        // the realized step, so rounding of x + h does not bias the quotient
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense symmetric inverse-Hessian approximation.
struct InverseHessian {
    n: usize,
    h: Vec<f64>,
    fresh: bool,
}

impl InverseHessian {
    fn identity(n: usize) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        Self { n, h, fresh: true }
    }

    fn reset(&mut self) {
        *self = Self::identity(self.n);
    }

    fn direction(&self, g: &[f64], p: &mut [f64]) {
        for (i, pi) in p.iter_mut().enumerate() {
            *pi = -dot(&self.h[i * self.n..(i + 1) * self.n], g);
        }
    }

    /// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let sy = dot(s, y);
        if sy <= 1e-12 * norm(s) * norm(y) {
            return false;
        }
        let n = self.n;
        if self.fresh {
            let scale = sy / dot(y, y);
            self.h.iter_mut().for_each(|v| *v *= scale);
            self.fresh = false;
        }
        let rho = 1.0 / sy;
        let mut hy = vec![0.0; n];
        for (i, v) in hy.iter_mut().enumerate() {
            *v = dot(&self.h[i * n..(i + 1) * n], y);
        }
        let yhy = dot(y, &hy);
        let coef = rho * rho * yhy + rho;
        for i in 0..n {
            let row = &mut self.h[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            }
        }
        true
    }
}

/// BFGS on the inverse Hessian with a weak-Wolfe bisection line search and
/// central-difference gradients.
pub fn bfgs<F: Objective + ?Sized>(f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
    let mut c = Counted::new(f, x0, cfg.budget);
    let r = bfgs_inner(&mut c, x0, cfg);
    finish(c, r)
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 40;
const STALL_LIMIT: usize = 3;

enum LineSearch {
    Accepted { f: f64 },
    Failed,
}

fn bfgs_inner<F: Objective + ?Sized>(c: &mut Counted<'_, F>, x0: &[f64], cfg: &OptConfig) -> Step<StopReason> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = c.eval(&x)?;
    if n == 0 {
        return Ok(StopReason::XTol);
    }
    let mut g = vec![0.0; n];
    fd_gradient_counted(c, &x, cfg.fd_step, &mut g)?;
    let mut h = InverseHessian::identity(n);
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut stall = 0;

    loop {
        c.mark_iteration();
        if g.iter().all(|&v| v == 0.0) {
            return Ok(StopReason::FTol);
        }
        h.direction(&g, &mut p);
        let mut gp = dot(&g, &p);
        if !(gp < 0.0) {
            // not a descent direction: fall back to steepest descent
            h.reset();
            h.direction(&g, &mut p);
            gp = dot(&g, &p);
        }
        let alpha0 = if h.fresh { (1.0 / norm(&g)).min(1.0) } else { 1.0 };

        let outcome = wolfe_search(c, &x, fx, &p, gp, alpha0, cfg.fd_step, &mut x_new, &mut g_new)?;
        let f_new = match outcome {
            LineSearch::Accepted { f } => f,
            LineSearch::Failed => match backtrack(c, &x, fx, &g, &mut x_new)? {
                Some(f) => {
                    fd_gradient_counted(c, &x_new, cfg.fd_step, &mut g_new)?;
                    h.reset();
                    f
                }
                None => return Ok(StopReason::XTol),
            },
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if !matches!(outcome, LineSearch::Failed) {
            h.update(&s, &y);
        }

        let improvement = fx - f_new;
        let small_step = s.iter().zip(&x_new).all(|(&si, &xi)| si.abs() <= cfg.x_tol * scale(xi));
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;

        if improvement <= cfg.f_tol * fx.abs().max(f64::MIN_POSITIVE) {
            stall += 1;
            if stall >= STALL_LIMIT {
                return Ok(StopReason::FTol);
            }
        } else {
            stall = 0;
        }
        if small_step && stall > 0 {
            return Ok(StopReason::XTol);
        }
    }
}

/// Bisection search for a step satisfying the weak Wolfe conditions. On
/// success `x_new`/`g_new` hold the accepted point and its gradient.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<F: Objective + ?Sized>(
    c: &mut Counted<'_, F>,
    x: &[f64],
    fx: f64,
    p: &[f64],
    gp: f64,
    alpha0: f64,
    fd_step: f64,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Step<LineSearch> {
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut alpha = alpha0;
    for _ in 0..MAX_LINE_SEARCH {
        for ((xn, &xi), &pi) in x_new.iter_mut().zip(x).zip(p) {
            *xn = xi + alpha * pi;
        }
        let ft = c.eval(x_new)?;
        if !(ft <= fx + C1 * alpha * gp) {
            hi = alpha;
        } else {
            fd_gradient_counted(c, x_new, fd_step, g_new)?;
            if dot(g_new, p) < C2 * gp {
                lo = alpha;
            } else {
                return Ok(LineSearch::Accepted { f: ft });
            }
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * alpha };
        if hi.is_finite() && (hi - lo) * norm(p) <= f64::EPSILON * scale(norm(x)) {
            break;
        }
    }
    Ok(LineSearch::Failed)
}

/// Steepest-descent step with step halving until the objective decreases.
fn backtrack<F: Objective + ?Sized>(
    c: &mut Counted<'_, F>,
    x: &[f64],
    fx: f64,
    g: &[f64],
    x_new: &mut [f64],
) -> Step<Option<f64>> {
    let mut alpha = (1.0 / norm(g)).min(1.0);
    for _ in 0..60 {
        for ((xn, &xi), &gi) in x_new.iter_mut().zip(x).zip(g) {
            *xn = xi - alpha * gi;
        }
        let ft = c.eval(x_new)?;
        if ft < fx {
            return Ok(Some(ft));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Relative forward-difference step for Jacobian columns.
const JACOBIAN_STEP: f64 = 1e-7;

/// Levenberg–Marquardt with identity damping and the gain-ratio damping
/// update. The Jacobian starts from forward differences and is then carried
/// along by rank-one secant updates, so most iterations cost one residual
/// evaluation; it is rebuilt whenever a secant-based step is rejected.
pub fn levenberg_marquardt<F: Objective + ?Sized>(f: &F, x0: &[f64], cfg: &OptConfig) -> OptResult {
    let mut c = Counted::new(f, x0, cfg.budget);
    let r = match f.residual_len() {
        Some(m) => lm_inner(&mut c, x0, m, cfg),
        None => bfgs_inner(&mut c, x0, cfg),
    };
    finish(c, r)
}

fn lm_inner<F: Objective + ?Sized>(c: &mut Counted<'_, F>, x0: &[f64], m: usize, cfg: &OptConfig) -> Step<StopReason> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    let mut fx = c.residuals(&x, &mut r)?;
    if n == 0 || m == 0 {
        return Ok(StopReason::XTol);
    }
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut rp = vec![0.0; m];
    let mut x_new = vec![0.0; n];
    let mut r_new = vec![0.0; m];
    let mut mu = f64::NAN;
    let mut nu = 2.0;
    let mut stall = 0;
    let mut need_jac = true;
    let mut since_fd = 0usize;
    let mut a = DMatrix::<f64>::zeros(n, n);

    loop {
        c.mark_iteration();
        if need_jac {
            let mut xp = x.clone();
            for j in 0..n {
                let target = x[j] + JACOBIAN_STEP * scale(x[j]);
                xp[j] = target;
                let h = target - x[j];
                c.residuals(&xp, &mut rp)?;
                xp[j] = x[j];
                for (i, (hi, lo)) in rp.iter().zip(&r).enumerate() {
                    let d = (hi - lo) / h;
                    jac[(i, j)] = if d.is_finite() { d } else { 0.0 };
                }
            }
            need_jac = false;
            since_fd = 0;
            a = jac.tr_mul(&jac);
        }
        let fresh = since_fd == 0;
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        if g.iter().all(|&v| v == 0.0) {
            if fresh {
                return Ok(StopReason::FTol);
            }
            need_jac = true;
            continue;
        }
        if mu.is_nan() {
            mu = 1e-3 * a.diagonal().max().max(f64::MIN_POSITIVE);
        }
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu;
        }
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                return Ok(StopReason::XTol);
            }
            continue;
        };
        let delta = chol.solve(&(-&g));
        if delta.norm() <= cfg.x_tol * (norm(&x) + cfg.x_tol) {
            if fresh {
                return Ok(StopReason::XTol);
            }
            need_jac = true;
            continue;
        }
        for ((xn, xi), d) in x_new.iter_mut().zip(&x).zip(delta.iter()) {
            *xn = xi + d;
        }
        let f_new = c.residuals(&x_new, &mut r_new)?;
        let predicted = delta.dot(&(&delta * mu - &g));
        let rho = (fx - f_new) / predicted;
        if f_new.is_finite() {
            // rank-one secant correction: J += (r_new - r - J delta) delta^T / |delta|^2
            let mut u = DVector::from_column_slice(&r_new) - rv - &jac * &delta;
            u /= delta.norm_squared();
            // keep a = J^T J in step: a += d v^T + v d^T + |u|^2 d d^T with v = J^T u
            let v = jac.tr_mul(&u);
            a.ger(1.0, &delta, &v, 1.0);
            a.ger(1.0, &v, &delta, 1.0);
            a.ger(u.norm_squared(), &delta, &delta, 1.0);
            jac.ger(1.0, &u, &delta, 1.0);
        }
        if rho > 0.0 && f_new.is_finite() {
            let improvement = fx - f_new;
            x.copy_from_slice(&x_new);
            r.copy_from_slice(&r_new);
            fx = f_new;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            since_fd += 1;
            if improvement <= cfg.f_tol * fx.abs().max(f64::MIN_POSITIVE) {
                stall += 1;
                if stall >= STALL_LIMIT {
                    return Ok(StopReason::FTol);
                }
            } else {
                stall = 0;
            }
        } else if fresh {
            // the model was exact to first order, so the damping is too weak
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                return Ok(StopReason::XTol);
            }
        } else {
            // a secant model failed; rebuild it before touching the damping
            need_jac = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    }

    fn shifted_quadratic(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 1.0).powi(2)).sum()
    }

    fn monotone(h: &[f64]) -> bool {
        h.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn pattern_search_examples() {
        let r = pattern_search(&shifted_quadratic, &[0.0; 3], &OptConfig::default());
        assert!(r.x_best.iter().all(|v| (v - 1.0).abs() <= 1e-6));
        assert_eq!(r.reason, StopReason::XTol);
        assert!(monotone(&r.history));

        let r = pattern_search(&shifted_quadratic, &[0.0; 3], &OptConfig::with_budget(1));
        assert_eq!((r.x_best, r.evals, r.reason), (vec![0.0; 3], 1, StopReason::Budget));

        let r = pattern_search(&|x: &[f64]| x[0].abs(), &[5.0], &OptConfig::default());
        assert!(r.f_best <= 1e-6);
    }

    #[test]
    fn nelder_mead_examples() {
        let r = nelder_mead(&shifted_quadratic, &[0.0; 2], &OptConfig::default());
        assert!(r.x_best.iter().all(|v| (v - 1.0).abs() <= 1e-6));

        let r = nelder_mead(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(2000));
        assert!(r.f_best <= 1e-8, "{r:?}");
        assert!(r.evals <= 2000);
        assert!(monotone(&r.history));

        let r = nelder_mead(&|x: &[f64]| x[0] * x[0], &[3.0], &OptConfig::default());
        assert!(r.x_best[0].abs() <= 1e-6);
    }

    #[test]
    fn bfgs_examples() {
        let r = bfgs(&|x: &[f64]| dot(x, x), &[3.0, 4.0], &OptConfig::default());
        assert!(r.f_best <= 1e-12, "{r:?}");
        assert!(r.evals <= 60, "{}", r.evals);

        let r = bfgs(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(500));
        assert!((r.x_best[0] - 1.0).abs() <= 1e-5 && (r.x_best[1] - 1.0).abs() <= 1e-5, "{r:?}");
        assert!(r.f_best <= 1e-8);
        assert!(monotone(&r.history));

        let r = bfgs(&|_: &[f64]| 3.0, &[1.0, 2.0], &OptConfig::default());
        assert_eq!(r.reason, StopReason::FTol);
        assert_eq!(r.f_best, 3.0);
    }

    #[test]
    fn fd_gradient_examples() {
        let g = fd_gradient(&|x: &[f64]| x[0] * x[0], &[3.0], f64::EPSILON.cbrt());
        assert!((g[0] - 6.0).abs() <= 1e-6);
        let g = fd_gradient(&|x: &[f64]| x[0] * x[1], &[2.0, 5.0], f64::EPSILON.cbrt());
        assert!((g[0] - 5.0).abs() <= 1e-6 && (g[1] - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn budget_accounting_is_exact() {
        use std::cell::Cell;
        let calls = Cell::new(0usize);
        let f = |x: &[f64]| {
            calls.set(calls.get() + 1);
            rosenbrock(x)
        };
        for method in [Method::PatternSearch, Method::NelderMead, Method::Bfgs] {
            calls.set(0);
            let r = method.run(&f, &[-1.2, 1.0], &OptConfig::with_budget(137));
            assert_eq!(r.evals, calls.get());
            assert!(r.evals <= 137);
            assert_eq!(f(&r.x_best), r.f_best);
        }
    }

    #[test]
    fn deterministic() {
        for method in [Method::PatternSearch, Method::NelderMead, Method::Bfgs] {
            let a = method.run(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(400));
            let b = method.run(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(400));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn schedule_pipeline() {
        let s = Schedule::default();
        assert_eq!(s.split_budget(10), vec![2, 8]);
        assert_eq!(s.split_budget(1), vec![0, 1]);
        let r = s.run(&shifted_quadratic, &[0.0; 36], &OptConfig::with_budget(50_000));
        assert!(r.f_best <= 1e-10, "{}", r.f_best);
        assert!(r.evals <= 50_000);
        assert!(monotone(&r.history));

        let r = s.run(&shifted_quadratic, &[0.0; 2], &OptConfig::with_budget(0));
        assert_eq!((r.evals, r.f_best), (0, f64::INFINITY));
    }

    #[test]
    fn nan_objective_is_treated_as_worst() {
        let f = |x: &[f64]| if x[0] > 2.0 { f64::NAN } else { (x[0] - 1.5).powi(2) };
        let r = nelder_mead(&f, &[0.0], &OptConfig::with_budget(500));
        assert!((r.x_best[0] - 1.5).abs() < 1e-4);
    }

    fn rosenbrock_ls() -> LeastSquares<impl Fn(&[f64], &mut [f64])> {
        LeastSquares::new(2, |x: &[f64], r: &mut [f64]| {
            r[0] = 10.0 * (x[1] - x[0] * x[0]);
            r[1] = 1.0 - x[0];
        })
    }

    #[test]
    fn levenberg_marquardt_solves_least_squares() {
        let f = rosenbrock_ls();
        assert_eq!(f.value(&[-1.2, 1.0]), rosenbrock(&[-1.2, 1.0]));
        let r = levenberg_marquardt(&f, &[-1.2, 1.0], &OptConfig::with_budget(5000));
        assert!(r.f_best <= 1e-20, "{r:?}");
        assert!(r.converged && r.evals < 5000);
        assert!(monotone(&r.history));

        // overdetermined linear fit: y = 2 + 3t
        let ts: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let f = LeastSquares::new(20, |x: &[f64], r: &mut [f64]| {
            for (ri, t) in r.iter_mut().zip(&ts) {
                *ri = x[0] + x[1] * t - (2.0 + 3.0 * t);
            }
        });
        let r = levenberg_marquardt(&f, &[0.0, 0.0], &OptConfig::default());
        assert!((r.x_best[0] - 2.0).abs() < 1e-8 && (r.x_best[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn levenberg_marquardt_budget_and_fallback() {
        use std::cell::Cell;
        let calls = Cell::new(0usize);
        let f = LeastSquares::new(2, |x: &[f64], r: &mut [f64]| {
            calls.set(calls.get() + 1);
            r[0] = 10.0 * (x[1] - x[0] * x[0]);
            r[1] = 1.0 - x[0];
        });
        for budget in [1, 2, 7, 31] {
            calls.set(0);
            let r = levenberg_marquardt(&f, &[-1.2, 1.0], &OptConfig::with_budget(budget));
            assert_eq!(r.evals, calls.get());
            assert!(r.evals <= budget);
        }
        // a plain closure has no residuals, so this is BFGS
        let a = levenberg_marquardt(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(300));
        let b = bfgs(&rosenbrock, &[-1.2, 1.0], &OptConfig::with_budget(300));
        assert_eq!(a, b);
        assert_eq!("lm".parse::<Method>().unwrap(), Method::LevenbergMarquardt);
    }

    #[test]
    fn schedule_text_round_trip() {
        let s: Schedule = "ps:1, bfgs:4".parse().unwrap();
        assert_eq!(s, Schedule::default());
        assert_eq!(s.to_string(), "pattern-search:0.2,bfgs:0.8");
        assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
        assert_eq!("lm".parse::<Schedule>().unwrap(), Schedule::single(Method::LevenbergMarquardt));
        assert!("bfgs:x".parse::<Schedule>().is_err());
        assert!("newton".parse::<Schedule>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptConfig::default().validate().is_ok());
        assert!(OptConfig::with_budget(0).validate().is_err());
        assert!(OptConfig { x_tol: 0.0, ..OptConfig::default() }.validate().is_err());
        assert!(Schedule::new(vec![]).is_err());
    }
}
