//! Perturbation estimate of an upper bound on `|Psi_T(x) - psi(x)|`.
//!
//! A small network `N_s(x, gamma)` enters through the homogeneous trial
//! `eta = (1 - P_x(theta*)) N_s`, so `Psi_T + eta` keeps every condition. With
//! the trained parameters frozen, `gamma` is trained from `eta = 0`; the
//! resulting error `delta^2` against the unperturbed error `s^2` gives the
//! pointwise estimate `|eta(x, gamma*)| / (1 - delta^2 / s^2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grids::Grid;
use crate::net::{EvalTriple, NetworkParams};
use crate::optimize::{Objective, OptConfig, Schedule};
use crate::problems::Problem;
use crate::train::{error_nf, scaled_residuals};
use crate::trial::{NeuralForm, SystemForm};

/// Ratios `delta^2 / s^2` above this are flagged as low confidence.
pub const LOW_CONFIDENCE_RATIO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    /// Perturbation parameters over all components; a multiple of 3.
    pub params: usize,
    pub budget: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub opt: OptConfig,
}

impl BoundConfig {
    pub fn new(params: usize, budget: usize, seed: u64) -> Self {
        Self { params, budget, seed, schedule: Schedule::default(), opt: OptConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// Training error of the unperturbed form.
    pub s2: f64,
    /// Training error after fitting the perturbation.
    pub delta2: f64,
    pub valid: bool,
    pub low_confidence: bool,
    /// Evaluation points.
    pub points: Vec<f64>,
    /// `|eta(x, gamma*)|` per component, then per point.
    pub eta_abs: Vec<Vec<f64>>,
    /// `|eta| / (1 - delta^2 / s^2)` with the same layout; empty when invalid.
    pub bound_abs: Vec<Vec<f64>>,
    /// Trained perturbation network per component.
    pub perturbation: Vec<NetworkParams>,
    pub evals: usize,
}

impl BoundResult {
    /// `delta^2 / s^2`.
    pub fn ratio(&self) -> f64 {
        self.delta2 / self.s2
    }

    /// Factor `1 / (1 - delta^2 / s^2)`, when the bound is valid.
    pub fn amplification(&self) -> Option<f64> {
        self.valid.then(|| amplification(self.s2, self.delta2))
    }
}

/// `1 / (1 - delta2 / s2)`.
pub fn amplification(s2: f64, delta2: f64) -> f64 {
    1.0 / (1.0 - delta2 / s2)
}

/// Splits `params` over `n` perturbation networks as whole neurons.
fn neuron_split(params: usize, n: usize) -> Result<Vec<usize>> {
    if params == 0 || !params.is_multiple_of(3) {
        return Err(Error::InvalidConfig(format!(
            "perturbation parameter count {params} is not a positive multiple of 3"
        )));
    }
    let neurons = params / 3;
    if neurons < n {
        return Err(Error::InvalidConfig(format!("{params} perturbation parameters cannot cover {n} components")));
    }
    Ok((0..n).map(|i| neurons / n + usize::from(i < neurons % n)).collect())
}

/// Perturbation networks with zero output weights and random inner weights.
pub fn initial_perturbation(params: usize, components: usize, seed: u64) -> Result<Vec<NetworkParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    neuron_split(params, components)?
        .into_iter()
        .map(|k| {
            let flat = (0..k).flat_map(|_| [0.0, rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect();
            NetworkParams::from_flat(flat)
        })
        .collect()
}

/// The homogeneous trial `(1 - P_x(theta*)) N_s` of each component.
pub fn perturbation_forms(trained: &SystemForm, nets: &[NetworkParams]) -> Result<Vec<NeuralForm>> {
    if nets.len() != trained.len() {
        return Err(Error::ComponentMismatch { expected: trained.len(), got: nets.len() });
    }
    Ok(trained.components().iter().zip(nets).map(|(c, n)| c.homogeneous().with_main(n.clone())).collect())
}

/// `eta(x)` for every component.
pub fn eta_eval(trained: &SystemForm, nets: &[NetworkParams], x: f64) -> Result<Vec<EvalTriple>> {
    let forms = perturbation_forms(trained, nets)?;
    forms.iter().map(|f| Ok(f.prepare()?.eval(x))).collect()
}

fn split_nets(shapes: &[usize], flat: &[f64]) -> Vec<NetworkParams> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for &len in shapes {
        out.push(NetworkParams::from_flat(flat[offset..offset + len].to_vec()).expect("shape preserved"));
        offset += len;
    }
    out
}

/// Training error of `trained + eta(gamma)`, also as a sum of squares.
struct PerturbationObjective<'a> {
    problem: &'a Problem,
    trained: &'a SystemForm,
    grid: &'a Grid,
    /// Frozen trial triples per point.
    base: &'a [Vec<EvalTriple>],
    shapes: &'a [usize],
}

impl PerturbationObjective<'_> {
    fn eval(&self, gamma: &[f64], out: Option<&mut [f64]>) -> f64 {
        let nets = split_nets(self.shapes, gamma);
        let fail = |out: Option<&mut [f64]>| {
            if let Some(o) = out {
                o.fill(f64::INFINITY);
            }
            f64::INFINITY
        };
        let Ok(forms) = perturbation_forms(self.trained, &nets) else { return fail(out) };
        let Ok(eta) = forms.iter().map(NeuralForm::prepare).collect::<Result<Vec<_>>>() else { return fail(out) };
        scaled_residuals(
            self.problem,
            self.grid.points(),
            |i, x, t| {
                for ((slot, b), e) in t.iter_mut().zip(&self.base[i]).zip(&eta) {
                    *slot = *b + e.eval(x);
                }
            },
            out,
        )
    }
}

impl Objective for PerturbationObjective<'_> {
    fn value(&self, gamma: &[f64]) -> f64 {
        self.eval(gamma, None)
    }

    fn residual_len(&self) -> Option<usize> {
        Some(self.grid.len() * self.problem.n_equations())
    }

    fn residuals(&self, gamma: &[f64], r: &mut [f64]) -> f64 {
        self.eval(gamma, Some(r))
    }
}

/// Fits a perturbation to `trained` on `grid` and evaluates the bound on `eval_grid`.
pub fn estimate_bound(
    problem: &Problem,
    trained: &SystemForm,
    grid: &Grid,
    eval_grid: &Grid,
    cfg: &BoundConfig,
) -> Result<BoundResult> {
    if trained.is_penalized() {
        return Err(Error::InvalidForm("the bound needs a trial that satisfies its conditions by construction".into()));
    }
    if cfg.budget == 0 {
        return Err(Error::InvalidConfig("bound budget must be at least 1".into()));
    }
    if trained.len() != problem.n_components() {
        return Err(Error::ComponentMismatch { expected: problem.n_components(), got: trained.len() });
    }
    let s2 = error_nf(problem, trained, grid)?;

    // the frozen trial never changes, so tabulate it once
    let prepared = trained.prepare()?;
    let base: Vec<Vec<EvalTriple>> =
        grid.points().iter().map(|&x| prepared.iter().map(|p| p.eval(x)).collect()).collect();

    let init = initial_perturbation(cfg.params, trained.len(), cfg.seed)?;
    let shapes: Vec<usize> = init.iter().map(NetworkParams::len).collect();
    let gamma0: Vec<f64> = init.iter().flat_map(|n| n.as_slice().iter().copied()).collect();

    let objective = PerturbationObjective { problem, trained, grid, base: &base, shapes: &shapes };
    let out = cfg.schedule.run(&objective, &gamma0, &OptConfig { budget: cfg.budget, ..cfg.opt });
    // the search starts at eta = 0, whose error is exactly s2
    let delta2 = out.f_best.min(s2);
    let gamma = if out.f_best <= s2 { out.x_best } else { gamma0 };
    let perturbation = split_nets(&shapes, &gamma);

    let forms = perturbation_forms(trained, &perturbation)?;
    let eta = forms.iter().map(NeuralForm::prepare).collect::<Result<Vec<_>>>()?;
    let eta_abs: Vec<Vec<f64>> =
        eta.iter().map(|e| eval_grid.points().iter().map(|&x| e.eval(x).value.abs()).collect()).collect();

    let valid = delta2 < s2;
    let bound_abs = if valid {
        let factor = amplification(s2, delta2);
        eta_abs.iter().map(|c| c.iter().map(|v| v * factor).collect()).collect()
    } else {
        Vec::new()
    };
    Ok(BoundResult {
        s2,
        delta2,
        valid,
        low_confidence: !valid || delta2 / s2 > LOW_CONFIDENCE_RATIO,
        points: eval_grid.points().to_vec(),
        eta_abs,
        bound_abs,
        perturbation,
        evals: out.evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{equidistant, test_grid};
    use crate::problems::registry;
    use crate::train::{initial_form, train, TrainConfig};
    use crate::trial::Mode;

    #[test]
    fn amplification_examples() {
        assert_eq!(amplification(1.0, 0.0), 1.0);
        assert_eq!(amplification(3.0, 1.5), 2.0);
    }

    #[test]
    fn initial_eta_vanishes() {
        let p = registry("tp2", "D-D").unwrap();
        let t = initial_form(&SystemForm::template(&p.components, Mode::Augmented, 90).unwrap(), 1, 0);
        let nets = initial_perturbation(60, 1, 5).unwrap();
        for x in [0.0, 1.3, 9.5] {
            let e = eta_eval(&t, &nets, x).unwrap()[0];
            assert!(e.value.abs() <= 1e-14 && e.d1.abs() <= 1e-14 && e.d2.abs() <= 1e-14);
        }
    }

    #[test]
    fn bound_on_short_training() {
        let p = registry("tp1", "IC").unwrap();
        let t = SystemForm::template(&p.components, Mode::Augmented, 36).unwrap();
        let g = equidistant(0.0, 1.5, 80).unwrap();
        let trained = train(&p, &t, &g, &TrainConfig { budget: 4000, seed: 2, ..TrainConfig::default() }).unwrap();
        let tg = test_grid(0.0, 1.5).unwrap();
        let b = estimate_bound(&p, &trained.form, &g, &tg, &BoundConfig::new(18, 2000, 3)).unwrap();
        assert_eq!(b.s2, trained.error_final);
        assert!(b.delta2 <= b.s2);
        assert_eq!(b.points.len(), 1000);
        if b.valid {
            assert!(b.amplification().unwrap() >= 1.0);
            for (bound, eta) in b.bound_abs[0].iter().zip(&b.eta_abs[0]) {
                assert!(bound >= eta);
            }
        }
        // the perturbed trial still meets the initial condition
        let e = eta_eval(&trained.form, &b.perturbation, 0.0).unwrap()[0];
        assert!(e.value.abs() <= 1e-9);
    }

    #[test]
    fn rejects_penalized_forms() {
        let p = registry("tp1", "IC").unwrap();
        let t = SystemForm::template(&p.components, Mode::Baseline, 36).unwrap();
        let g = equidistant(0.0, 1.5, 80).unwrap();
        assert!(estimate_bound(&p, &t, &g, &g, &BoundConfig::new(18, 10, 0)).is_err());
    }

    #[test]
    fn neuron_split_examples() {
        assert_eq!(neuron_split(18, 1).unwrap(), vec![6]);
        assert_eq!(neuron_split(60, 2).unwrap(), vec![10, 10]);
        assert_eq!(neuron_split(15, 2).unwrap(), vec![3, 2]);
        assert!(neuron_split(10, 1).is_err());
        assert!(neuron_split(3, 2).is_err());
    }
}
