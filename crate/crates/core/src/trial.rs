//! Trial solutions `Psi_T = A + G` and their flat parameter layout.
//!
//! For an augmented form with match operator `P(theta)` and main network `N`,
//! `Psi_T = P(theta) psi + (1 - P(theta)) N = N + sum_j (xi_j - c_j(N)) B_j`,
//! where `c_j` are the condition functionals and `B_j` the match basis. The
//! same expression with `xi = 0` is the homogeneous part used by the
//! perturbation bound.

use rand::Rng;

use crate::conditions::{
    reduce_linear_to_dirichlet, rigid_basis, rigid_coefficients, ConditionSpec, Constraint, MatchOperator, MatchParams,
};
use crate::error::{Error, Result};
use crate::net::{eval_flat, EvalTriple, NetworkParams};

/// How a trial solution treats its conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Parametric match networks trained jointly with the main network.
    Augmented,
    /// Rigid quadratic Dirichlet operator with network-dependent boundary values.
    RigidReduced,
    /// Bare network; conditions enter the loss as penalties.
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Augmented => "augmented",
            Mode::RigidReduced => "rigid-reduced",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "augmented" | "nf" | "neural-form" => Ok(Mode::Augmented),
            "rigid-reduced" | "rigid" | "reduced" => Ok(Mode::RigidReduced),
            "baseline" | "penalty" | "nn" => Ok(Mode::Baseline),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Trial solution for one scalar unknown.
///
/// A form without a condition spec is a free network (used for system
/// components that carry no conditions of their own).
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralForm {
    spec: Option<ConditionSpec>,
    match_params: Option<MatchParams>,
    main: NetworkParams,
    mode: Mode,
}

impl NeuralForm {
    pub fn new(
        spec: Option<ConditionSpec>,
        match_params: Option<MatchParams>,
        main: NetworkParams,
        mode: Mode,
    ) -> Result<Self> {
        if let Some(s) = &spec {
            if matches!(s, ConditionSpec::SystemInitial { .. }) {
                return Err(Error::InvalidForm("split system conditions into per-component specs first".into()));
            }
            s.validate()?;
        }
        match mode {
            Mode::Augmented => {
                let s =
                    spec.as_ref().ok_or_else(|| Error::InvalidForm("augmented form needs a condition spec".into()))?;
                let mp = match_params
                    .as_ref()
                    .ok_or_else(|| Error::MatchArity("augmented form needs match networks".into()))?;
                if mp.arity() != s.match_arity() {
                    return Err(Error::MatchArity(format!(
                        "{} conditions need {} match network(s), got {}",
                        s.label(),
                        s.match_arity(),
                        mp.arity()
                    )));
                }
            }
            Mode::RigidReduced => {
                let s = spec
                    .as_ref()
                    .ok_or_else(|| Error::InvalidForm("rigid-reduced form needs a condition spec".into()))?;
                let Some((a, b, c)) = rigid_coefficients(s) else {
                    return Err(Error::InvalidForm(format!(
                        "rigid reduction applies to mixed or Robin conditions, not {}",
                        s.label()
                    )));
                };
                if match_params.is_some() {
                    return Err(Error::MatchArity("rigid-reduced form has no match networks".into()));
                }
                // probe the denominators once with a zero network
                reduce_linear_to_dirichlet(a, b, c, [0.0, 0.0], EvalTriple::ZERO, EvalTriple::ZERO)?;
            }
            Mode::Baseline => {
                if match_params.is_some() {
                    return Err(Error::MatchArity("baseline form has no match networks".into()));
                }
            }
        }
        Ok(Self { spec, match_params, main, mode })
    }

    /// Zero-parameter form of the given shape. `k_match` is ignored unless the
    /// mode is augmented.
    pub fn zeros(spec: Option<ConditionSpec>, mode: Mode, k_main: usize, k_match: usize) -> Result<Self> {
        let main = NetworkParams::zeros(k_main)?;
        let match_params = match (mode, &spec) {
            (Mode::Augmented, Some(s)) => Some(MatchParams::zeros(s, k_match)?),
            _ => None,
        };
        Self::new(spec, match_params, main, mode)
    }

    pub fn spec(&self) -> Option<&ConditionSpec> {
        self.spec.as_ref()
    }

    pub fn match_params(&self) -> Option<&MatchParams> {
        self.match_params.as_ref()
    }

    pub fn main(&self) -> &NetworkParams {
        &self.main
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// True when the conditions hold by construction.
    pub fn satisfies_conditions_exactly(&self) -> bool {
        self.spec.is_none() || self.mode != Mode::Baseline
    }

    /// Same form with a different main network (shape may differ).
    pub fn with_main(&self, main: NetworkParams) -> Self {
        Self { main, ..self.clone() }
    }

    /// Same form with homogeneous (zero) prescribed values.
    pub fn homogeneous(&self) -> Self {
        Self { spec: self.spec.as_ref().map(ConditionSpec::homogeneous), ..self.clone() }
    }

    pub fn param_count(&self) -> usize {
        self.main.len() + self.match_params.as_ref().map_or(0, MatchParams::param_count)
    }

    /// Flat vector `main || theta_1 || theta_2`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.write_params(&mut out);
        out
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.main.as_slice());
        if let Some(mp) = &self.match_params {
            out.extend_from_slice(mp.theta1.as_slice());
            if let Some(t2) = &mp.theta2 {
                out.extend_from_slice(t2.as_slice());
            }
        }
    }

    /// Overwrites all parameters from a flat vector of exactly
    /// [`param_count`](Self::param_count) entries.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::LengthMismatch { expected: self.param_count(), got: flat.len() });
        }
        let mut rest = flat;
        let mut take = |dst: &mut NetworkParams| {
            let (head, tail) = rest.split_at(dst.len());
            dst.as_mut_slice().copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.main);
        if let Some(mp) = &mut self.match_params {
            take(&mut mp.theta1);
            if let Some(t2) = &mut mp.theta2 {
                take(t2);
            }
        }
        Ok(())
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(flat)?;
        Ok(out)
    }

    /// Resolves every x-independent constant of the trial.
    pub fn prepare(&self) -> Result<PreparedForm<'_>> {
        let main = self.main.as_slice();
        let kind = match (self.mode, &self.spec) {
            (Mode::Baseline, _) | (_, None) => Prepared::Plain,
            (Mode::Augmented, Some(spec)) => {
                let mp = self.match_params.as_ref().expect("validated at construction");
                let op = MatchOperator::new(spec, mp)?;
                let mut coeffs = [0.0; 2];
                for ((c, con), slot) in spec.constraints().iter().zip(spec.values()).zip(coeffs.iter_mut()) {
                    *slot = con - c.apply(eval_flat(main, c.at));
                }
                Prepared::Augmented { op, coeffs }
            }
            (Mode::RigidReduced, Some(spec)) => {
                let (a, b, c) = rigid_coefficients(spec).expect("validated at construction");
                let (n_a, n_b) = (eval_flat(main, a), eval_flat(main, b));
                let v = spec.values();
                let (psi_a, psi_b) = reduce_linear_to_dirichlet(a, b, c, [v[0], v[1]], n_a, n_b)?;
                Prepared::Rigid { a, b, ca: psi_a - n_a.value, cb: psi_b - n_b.value }
            }
        };
        Ok(PreparedForm { main, kind })
    }

    /// Signed violation of every prescribed condition.
    pub fn condition_residuals(&self) -> Result<Vec<f64>> {
        let Some(spec) = &self.spec else { return Ok(Vec::new()) };
        let p = self.prepare()?;
        Ok(spec.constraints().iter().map(|c: &Constraint| c.residual(p.eval(c.at))).collect())
    }
}

/// A [`NeuralForm`] with its x-independent constants resolved.
#[derive(Debug, Clone)]
pub struct PreparedForm<'a> {
    main: &'a [f64],
    kind: Prepared<'a>,
}

#[derive(Debug, Clone)]
enum Prepared<'a> {
    Plain,
    Augmented { op: MatchOperator<'a>, coeffs: [f64; 2] },
    Rigid { a: f64, b: f64, ca: f64, cb: f64 },
}

impl PreparedForm<'_> {
    #[inline]
    pub fn eval(&self, x: f64) -> EvalTriple {
        let n = eval_flat(self.main, x);
        match &self.kind {
            Prepared::Plain => n,
            Prepared::Augmented { op, coeffs } => {
                let basis = op.basis(x);
                let mut out = n + basis[0] * coeffs[0];
                if op.arity() == 2 {
                    out = out + basis[1] * coeffs[1];
                }
                out
            }
            Prepared::Rigid { a, b, ca, cb } => {
                let [qa, qb] = rigid_basis(*a, *b, x);
                n + qa * *ca + qb * *cb
            }
        }
    }
}

/// Evaluates a scalar trial solution and its first two derivatives.
pub fn trial_eval(form: &NeuralForm, x: f64) -> Result<EvalTriple> {
    Ok(form.prepare()?.eval(x))
}

pub fn split_params(form: &NeuralForm) -> Vec<f64> {
    form.params()
}

/// Rebuilds a form of `template`'s shape from a flat vector.
pub fn join_params(template: &NeuralForm, flat: &[f64]) -> Result<NeuralForm> {
    template.with_params(flat)
}

/// One trial form per solution component, sharing the domain. Scalar problems
/// are one-component systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemForm {
    components: Vec<NeuralForm>,
}

impl From<NeuralForm> for SystemForm {
    fn from(f: NeuralForm) -> Self {
        Self { components: vec![f] }
    }
}

impl SystemForm {
    pub fn new(components: Vec<NeuralForm>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidForm("a system needs at least one component".into()));
        }
        Ok(Self { components })
    }

    /// Zero-parameter form with `total_params` parameters spread over every
    /// network as evenly as whole neurons allow; main networks absorb the
    /// remainder.
    ///
    /// Augmented mode gives match networks to every component that has a
    /// spec; components without one become free networks.
    pub fn template(specs: &[Option<ConditionSpec>], mode: Mode, total_params: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidForm("a system needs at least one component".into()));
        }
        if total_params == 0 || !total_params.is_multiple_of(3) {
            return Err(Error::InvalidConfig(format!(
                "parameter count {total_params} is not a positive multiple of 3"
            )));
        }
        let match_nets: Vec<usize> = specs
            .iter()
            .map(|s| match (mode, s) {
                (Mode::Augmented, Some(s)) => s.match_arity(),
                _ => 0,
            })
            .collect();
        let mains = specs.len();
        let nets = mains + match_nets.iter().sum::<usize>();
        let neurons = total_params / 3;
        let base = neurons / nets;
        if base == 0 {
            return Err(Error::InvalidConfig(format!(
                "{total_params} parameters cannot give each of {nets} networks a neuron"
            )));
        }
        let rem = neurons % nets;
        let components = specs
            .iter()
            .zip(&match_nets)
            .enumerate()
            .map(|(i, (s, &m))| {
                let k_main = base + rem / mains + usize::from(i < rem % mains);
                let comp_mode = if s.is_none() { Mode::Baseline } else { mode };
                let k_match = if m > 0 { base } else { 0 };
                NeuralForm::zeros(s.clone(), comp_mode, k_main, k_match)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[NeuralForm] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// True when any component relies on penalties for its conditions.
    pub fn is_penalized(&self) -> bool {
        self.components.iter().any(|c| !c.satisfies_conditions_exactly())
    }

    pub fn param_count(&self) -> usize {
        self.components.iter().map(NeuralForm::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in &self.components {
            c.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::LengthMismatch { expected: self.param_count(), got: flat.len() });
        }
        let mut offset = 0;
        for c in &mut self.components {
            let n = c.param_count();
            c.set_params(&flat[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(flat)?;
        Ok(out)
    }

    /// Same shape with every parameter drawn uniform on `[-1, 1]`.
    pub fn randomized<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let flat: Vec<f64> = (0..self.param_count()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        self.with_params(&flat).expect("length matches")
    }

    pub fn prepare(&self) -> Result<Vec<PreparedForm<'_>>> {
        self.components.iter().map(NeuralForm::prepare).collect()
    }

    pub fn eval(&self, x: f64) -> Result<Vec<EvalTriple>> {
        Ok(self.prepare()?.iter().map(|p| p.eval(x)).collect())
    }

    /// Signed violations of every component's conditions, component by component.
    pub fn condition_residuals(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for c in &self.components {
            out.extend(c.condition_residuals()?);
        }
        Ok(out)
    }
}

/// Evaluates every component of a system trial solution.
pub fn system_trial_eval(sf: &SystemForm, x: f64) -> Result<Vec<EvalTriple>> {
    sf.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_form(spec: ConditionSpec, mode: Mode, k: usize, seed: u64) -> NeuralForm {
        let t = NeuralForm::zeros(Some(spec), mode, k, k).unwrap();
        SystemForm::from(t).randomized(&mut rng(seed)).components()[0].clone()
    }

    #[test]
    fn dirichlet_augmented_hits_boundaries() {
        let spec = ConditionSpec::Dirichlet { a: 0.0, b: 9.5, xi_a: 0.1, xi_b: 2.0 };
        for seed in 0..20 {
            let f = random_form(spec.clone(), Mode::Augmented, 10, seed);
            assert!((trial_eval(&f, 0.0).unwrap().value - 0.1).abs() <= 1e-9);
            assert!((trial_eval(&f, 9.5).unwrap().value - 2.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn baseline_zero_is_zero() {
        let spec = ConditionSpec::Dirichlet { a: 0.0, b: 1.0, xi_a: 3.0, xi_b: 2.0 };
        let f = NeuralForm::zeros(Some(spec), Mode::Baseline, 4, 0).unwrap();
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(trial_eval(&f, x).unwrap(), EvalTriple::ZERO);
        }
    }

    #[test]
    fn mixed_rigid_reduced_hits_conditions() {
        let spec = ConditionSpec::MixedDN { a: 0.0, b: 9.5, xi_a: 0.1, xi_b: 4.0 };
        for seed in 0..20 {
            let f = random_form(spec.clone(), Mode::RigidReduced, 8, seed);
            assert!((trial_eval(&f, 0.0).unwrap().value - 0.1).abs() <= 1e-9);
            assert!((trial_eval(&f, 9.5).unwrap().d1 - 4.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn robin_rigid_reduced_hits_conditions() {
        let spec = ConditionSpec::robin(0.0, 9.5, 1.0, 1.0, 1.0, 1.0, 0.11, 6.0).unwrap();
        for seed in 0..20 {
            let f = random_form(spec.clone(), Mode::RigidReduced, 8, seed);
            for r in f.condition_residuals().unwrap() {
                assert!(r.abs() <= 1e-9);
            }
        }
        // asymmetric coefficients exercise the b-side formula
        let spec = ConditionSpec::robin(0.0, 2.0, 0.5, 1.5, 2.0, 0.25, -0.3, 1.2).unwrap();
        let f = random_form(spec, Mode::RigidReduced, 6, 77);
        for r in f.condition_residuals().unwrap() {
            assert!(r.abs() <= 1e-9, "violation {r}");
        }
    }

    #[test]
    fn rigid_mode_rejects_other_conditions() {
        let spec = ConditionSpec::Dirichlet { a: 0.0, b: 1.0, xi_a: 0.0, xi_b: 0.0 };
        assert!(NeuralForm::zeros(Some(spec), Mode::RigidReduced, 3, 0).is_err());
    }

    #[test]
    fn split_join_round_trip() {
        let spec = ConditionSpec::Dirichlet { a: 0.0, b: 9.5, xi_a: 0.1, xi_b: 2.0 };
        let f = random_form(spec, Mode::Augmented, 10, 1);
        let flat = split_params(&f);
        assert_eq!(flat.len(), 90);
        assert_eq!(join_params(&f, &flat).unwrap(), f);
        assert!(matches!(join_params(&f, &flat[1..]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn system_initial_form() {
        let specs: Vec<_> = ConditionSpec::SystemInitial { a: 0.0, xi: vec![0.0, 1.0] }
            .component_specs()
            .into_iter()
            .map(Some)
            .collect();
        let t = SystemForm::template(&specs, Mode::Augmented, 240).unwrap();
        assert_eq!(t.param_count(), 240);
        for seed in 0..10 {
            let f = t.randomized(&mut rng(seed));
            let v = system_trial_eval(&f, 0.0).unwrap();
            assert!(v[0].value.abs() <= 1e-9);
            assert!((v[1].value - 1.0).abs() <= 1e-9);
        }
        // zero networks collapse to the initial values
        let v = system_trial_eval(&t, 2.3).unwrap();
        assert_eq!(v[0], EvalTriple::constant(0.0));
        assert_eq!(v[1], EvalTriple::constant(1.0));
    }

    #[test]
    fn system_formula_matches_component_form() {
        // Psi = N(x) + [1 + Nt(x) - Nt(a)] [psi(a) - N(a)]
        let spec = ConditionSpec::FirstOrderInitial { a: 0.0, xi_a: 4.0 / 3.0 * 1f64.exp() };
        let f = random_form(spec, Mode::Augmented, 5, 3);
        let main = f.main();
        let tilde = &f.match_params().unwrap().theta1;
        for x in [0.0, 0.7, 4.2] {
            let expected = main.eval(x)
                + (tilde.eval(x) + EvalTriple::constant(1.0 - tilde.eval(0.0).value))
                    * (4.0 / 3.0 * 1f64.exp() - main.eval(0.0).value);
            let got = trial_eval(&f, x).unwrap();
            assert!((got.value - expected.value).abs() <= 1e-12);
            assert!((got.d1 - expected.d1).abs() <= 1e-12);
        }
        assert!((trial_eval(&f, 0.0).unwrap().value - 4.0 / 3.0 * 1f64.exp()).abs() <= 1e-9);
    }

    #[test]
    fn template_budget_split() {
        let d = Some(ConditionSpec::Dirichlet { a: 0.0, b: 1.0, xi_a: 0.0, xi_b: 0.0 });
        let t = SystemForm::template(std::slice::from_ref(&d), Mode::Augmented, 90).unwrap();
        let c = &t.components()[0];
        assert_eq!(c.main().neuron_count(), 10);
        assert_eq!(c.match_params().unwrap().theta1.neuron_count(), 10);

        let ic = Some(ConditionSpec::FirstOrderInitial { a: 0.0, xi_a: 0.15 });
        let t = SystemForm::template(std::slice::from_ref(&ic), Mode::Augmented, 36).unwrap();
        assert_eq!(t.components()[0].main().neuron_count(), 6);

        // 11 neurons over 3 networks: 3 + 3 matches, main takes 5
        let t = SystemForm::template(std::slice::from_ref(&d), Mode::Augmented, 33).unwrap();
        assert_eq!(t.components()[0].main().neuron_count(), 5);
        assert_eq!(t.param_count(), 33);

        let t = SystemForm::template(std::slice::from_ref(&d), Mode::Baseline, 36).unwrap();
        assert_eq!(t.param_count(), 36);
        assert!(t.is_penalized());

        assert!(SystemForm::template(std::slice::from_ref(&d), Mode::Augmented, 35).is_err());
        assert!(SystemForm::template(&[d], Mode::Augmented, 6).is_err());
    }

    #[test]
    fn derivatives_match_fd() {
        let specs = [
            ConditionSpec::Dirichlet { a: 0.0, b: 2.0, xi_a: 1.0, xi_b: -1.0 },
            ConditionSpec::Cauchy { a: 0.0, xi0: 1.0, xi1: 0.0 },
            ConditionSpec::robin(0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.3, 0.2).unwrap(),
        ];
        for (i, spec) in specs.into_iter().enumerate() {
            for mode in [Mode::Augmented, Mode::Baseline] {
                let f = random_form(spec.clone(), mode, 5, i as u64);
                let p = f.prepare().unwrap();
                let h = 1e-5;
                for x in [0.1, 0.9, 1.7] {
                    let t = p.eval(x);
                    let fd1 = (p.eval(x + h).value - p.eval(x - h).value) / (2.0 * h);
                    let fd2 = (p.eval(x + h).d1 - p.eval(x - h).d1) / (2.0 * h);
                    assert!((t.d1 - fd1).abs() / t.d1.abs().max(1.0) <= 1e-6);
                    assert!((t.d2 - fd2).abs() / t.d2.abs().max(1.0) <= 1e-6);
                }
            }
        }
    }
}
