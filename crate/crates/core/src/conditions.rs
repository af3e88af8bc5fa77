//! Boundary and initial condition specifications and the parametric matching
//! operators built from them.
//!
//! Every operator is linear in the prescribed condition values: for a spec with
//! values `xi_1..xi_m` the match is `A(x) = sum_j xi_j * B_j(x)`, where the basis
//! functions `B_j` depend on the match networks only. Each `B_j` satisfies the
//! `j`-th condition functional with value 1 and every other functional with
//! value 0, so `A` meets the prescribed conditions for any network parameters.

use crate::error::{Error, Result};
use crate::net::{eval_flat, EvalTriple, NetworkParams};

/// Conditions attached to a scalar unknown (or, for `SystemInitial`, to every
/// component of a first-order system).
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSpec {
    /// `psi(a) = xi_a`. The anchor `a` may sit at either end of the domain.
    FirstOrderInitial { a: f64, xi_a: f64 },
    /// `psi(a) = xi_a`, `psi(b) = xi_b`.
    Dirichlet { a: f64, b: f64, xi_a: f64, xi_b: f64 },
    /// `psi(a) = xi_a`, `psi'(b) = xi_b`.
    MixedDN { a: f64, b: f64, xi_a: f64, xi_b: f64 },
    /// `psi'(a) = xi_a`, `psi'(b) = xi_b`.
    Neumann { a: f64, b: f64, xi_a: f64, xi_b: f64 },
    /// `psi(a) = xi0`, `psi'(a) = xi1`.
    Cauchy { a: f64, xi0: f64, xi1: f64 },
    /// `lambda psi(a) + mu psi'(a) = xi_a`, `gamma psi(b) + delta psi'(b) = xi_b`.
    Robin { a: f64, b: f64, lambda: f64, mu: f64, gamma: f64, delta: f64, xi_a: f64, xi_b: f64 },
    /// `psi_i(a) = xi[i]` for every component of a first-order system.
    SystemInitial { a: f64, xi: Vec<f64> },
}

/// A single linear condition functional `value_coef * f(at) + deriv_coef * f'(at) = target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub at: f64,
    pub value_coef: f64,
    pub deriv_coef: f64,
    pub target: f64,
}

impl Constraint {
    const fn value(at: f64, target: f64) -> Self {
        Self { at, value_coef: 1.0, deriv_coef: 0.0, target }
    }

    const fn slope(at: f64, target: f64) -> Self {
        Self { at, value_coef: 0.0, deriv_coef: 1.0, target }
    }

    /// Applies the functional (without the target) to a function evaluated at `at`.
    #[inline]
    pub fn apply(&self, t: EvalTriple) -> f64 {
        let mut s = 0.0;
        if self.value_coef != 0.0 {
            s += self.value_coef * t.value;
        }
        if self.deriv_coef != 0.0 {
            s += self.deriv_coef * t.d1;
        }
        s
    }

    /// Signed violation `functional(f) - target`.
    pub fn residual(&self, t: EvalTriple) -> f64 {
        self.apply(t) - self.target
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::InvalidInterval { a, b });
    }
    Ok(())
}

/// Denominator shared by the Robin `F_1`/`H_1` coefficients.
fn robin_denominator(a: f64, b: f64, lambda: f64, mu: f64, gamma: f64, delta: f64) -> f64 {
    let l = b - a;
    delta * (2.0 * mu - lambda * l) + mu * (2.0 * delta + gamma * l)
}

impl ConditionSpec {
    /// Builds a Robin spec, rejecting coefficient sets the match operator cannot handle.
    #[allow(clippy::too_many_arguments)]
    pub fn robin(a: f64, b: f64, lambda: f64, mu: f64, gamma: f64, delta: f64, xi_a: f64, xi_b: f64) -> Result<Self> {
        let spec = ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, xi_a, xi_b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ConditionSpec::FirstOrderInitial { .. } | ConditionSpec::Cauchy { .. } => Ok(()),
            ConditionSpec::SystemInitial { ref xi, .. } => {
                if xi.is_empty() {
                    Err(Error::InvalidForm("system needs at least one component".into()))
                } else {
                    Ok(())
                }
            }
            ConditionSpec::Dirichlet { a, b, .. }
            | ConditionSpec::MixedDN { a, b, .. }
            | ConditionSpec::Neumann { a, b, .. } => check_interval(a, b),
            ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, .. } => {
                check_interval(a, b)?;
                if mu == 0.0 || delta == 0.0 {
                    return Err(Error::DegenerateCondition(format!(
                        "Robin match needs mu != 0 and delta != 0 (mu = {mu}, delta = {delta})"
                    )));
                }
                let d = robin_denominator(a, b, lambda, mu, gamma, delta);
                if d == 0.0 || !d.is_finite() {
                    return Err(Error::DegenerateCondition(format!(
                        "Robin denominator vanishes for lambda={lambda}, mu={mu}, gamma={gamma}, delta={delta}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Short label used by tables and the CLI.
    pub fn label(&self) -> &'static str {
        match self {
            ConditionSpec::FirstOrderInitial { .. } => "IC",
            ConditionSpec::Dirichlet { .. } => "D-D",
            ConditionSpec::MixedDN { .. } => "D-N",
            ConditionSpec::Neumann { .. } => "N-N",
            ConditionSpec::Cauchy { .. } => "C",
            ConditionSpec::Robin { .. } => "R",
            ConditionSpec::SystemInitial { .. } => "IC",
        }
    }

    /// Number of match networks the augmented operator needs.
    pub fn match_arity(&self) -> usize {
        match self {
            ConditionSpec::FirstOrderInitial { .. } | ConditionSpec::SystemInitial { .. } => 1,
            _ => 2,
        }
    }

    /// Prescribed values in functional order.
    pub fn values(&self) -> Vec<f64> {
        match self {
            ConditionSpec::FirstOrderInitial { xi_a, .. } => vec![*xi_a],
            ConditionSpec::Dirichlet { xi_a, xi_b, .. }
            | ConditionSpec::MixedDN { xi_a, xi_b, .. }
            | ConditionSpec::Neumann { xi_a, xi_b, .. }
            | ConditionSpec::Robin { xi_a, xi_b, .. } => vec![*xi_a, *xi_b],
            ConditionSpec::Cauchy { xi0, xi1, .. } => vec![*xi0, *xi1],
            ConditionSpec::SystemInitial { xi, .. } => xi.clone(),
        }
    }

    /// Same condition type with the prescribed values replaced.
    pub fn with_values(&self, v: &[f64]) -> Result<Self> {
        let expected = self.values().len();
        if v.len() != expected {
            return Err(Error::LengthMismatch { expected, got: v.len() });
        }
        let mut out = self.clone();
        match &mut out {
            ConditionSpec::FirstOrderInitial { xi_a, .. } => *xi_a = v[0],
            ConditionSpec::Dirichlet { xi_a, xi_b, .. }
            | ConditionSpec::MixedDN { xi_a, xi_b, .. }
            | ConditionSpec::Neumann { xi_a, xi_b, .. }
            | ConditionSpec::Robin { xi_a, xi_b, .. } => {
                *xi_a = v[0];
                *xi_b = v[1];
            }
            ConditionSpec::Cauchy { xi0, xi1, .. } => {
                *xi0 = v[0];
                *xi1 = v[1];
            }
            ConditionSpec::SystemInitial { xi, .. } => xi.copy_from_slice(v),
        }
        Ok(out)
    }

    /// The homogeneous version (all prescribed values zero).
    pub fn homogeneous(&self) -> Self {
        let zeros = vec![0.0; self.values().len()];
        self.with_values(&zeros).expect("same length")
    }

    /// Condition functionals in the order of [`values`](Self::values). For
    /// `SystemInitial`, functional `i` applies to component `i`.
    pub fn constraints(&self) -> Vec<Constraint> {
        match *self {
            ConditionSpec::FirstOrderInitial { a, xi_a } => vec![Constraint::value(a, xi_a)],
            ConditionSpec::Dirichlet { a, b, xi_a, xi_b } => {
                vec![Constraint::value(a, xi_a), Constraint::value(b, xi_b)]
            }
            ConditionSpec::MixedDN { a, b, xi_a, xi_b } => {
                vec![Constraint::value(a, xi_a), Constraint::slope(b, xi_b)]
            }
            ConditionSpec::Neumann { a, b, xi_a, xi_b } => {
                vec![Constraint::slope(a, xi_a), Constraint::slope(b, xi_b)]
            }
            ConditionSpec::Cauchy { a, xi0, xi1 } => {
                vec![Constraint::value(a, xi0), Constraint::slope(a, xi1)]
            }
            ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, xi_a, xi_b } => vec![
                Constraint { at: a, value_coef: lambda, deriv_coef: mu, target: xi_a },
                Constraint { at: b, value_coef: gamma, deriv_coef: delta, target: xi_b },
            ],
            ConditionSpec::SystemInitial { a, ref xi } => xi.iter().map(|&v| Constraint::value(a, v)).collect(),
        }
    }

    /// Splits a `SystemInitial` spec into one first-order initial spec per component.
    pub fn component_specs(&self) -> Vec<ConditionSpec> {
        match self {
            ConditionSpec::SystemInitial { a, xi } => {
                xi.iter().map(|&v| ConditionSpec::FirstOrderInitial { a: *a, xi_a: v }).collect()
            }
            other => vec![other.clone()],
        }
    }
}

/// Parameters of the match networks `N_1(x, theta_1)` and, for second-order
/// conditions, `N_2(x, theta_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub theta1: NetworkParams,
    pub theta2: Option<NetworkParams>,
}

impl MatchParams {
    pub fn single(theta1: NetworkParams) -> Self {
        Self { theta1, theta2: None }
    }

    pub fn pair(theta1: NetworkParams, theta2: NetworkParams) -> Self {
        Self { theta1, theta2: Some(theta2) }
    }

    /// Zero networks of `k` neurons each, shaped for `spec`.
    pub fn zeros(spec: &ConditionSpec, k: usize) -> Result<Self> {
        let theta1 = NetworkParams::zeros(k)?;
        let theta2 = if spec.match_arity() == 2 { Some(NetworkParams::zeros(k)?) } else { None };
        Ok(Self { theta1, theta2 })
    }

    pub fn arity(&self) -> usize {
        1 + usize::from(self.theta2.is_some())
    }

    pub fn param_count(&self) -> usize {
        self.theta1.len() + self.theta2.as_ref().map_or(0, NetworkParams::len)
    }
}

/// The four coefficients that shape the Robin match functions `F` and `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinCoeffs {
    pub f1: f64,
    pub f2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Computes `F_1, F_2, H_1, H_2` so that
/// `F = N_1 + F_1 (2x-a-b) + F_2 (x-a)(x-b)` satisfies the Robin functionals
/// with values (1, 0) and `H` (built the same way from `N_2`) with values (0, 1).
pub fn robin_coeffs(spec: &ConditionSpec, mp: &MatchParams) -> Result<RobinCoeffs> {
    let ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, .. } = *spec else {
        return Err(Error::MatchArity("Robin coefficients need a Robin spec".into()));
    };
    spec.validate()?;
    let theta2 = mp.theta2.as_ref().ok_or_else(|| Error::MatchArity("Robin match needs two networks".into()))?;
    Ok(robin_coeffs_raw(a, b, [lambda, mu, gamma, delta], mp.theta1.as_slice(), theta2.as_slice()))
}

fn robin_coeffs_raw(a: f64, b: f64, c: [f64; 4], theta1: &[f64], theta2: &[f64]) -> RobinCoeffs {
    let [lambda, mu, gamma, delta] = c;
    let l = b - a;
    let d = robin_denominator(a, b, lambda, mu, gamma, delta);
    let (n1a, n1b) = (eval_flat(theta1, a), eval_flat(theta1, b));
    let (n2a, n2b) = (eval_flat(theta2, a), eval_flat(theta2, b));
    let ra1 = lambda * n1a.value + mu * n1a.d1;
    let rb1 = gamma * n1b.value + delta * n1b.d1;
    let ra2 = lambda * n2a.value + mu * n2a.d1;
    let rb2 = gamma * n2b.value + delta * n2b.d1;
    let f1 = (delta * (1.0 - ra1) - mu * rb1) / d;
    let f2 = (-rb1 - (2.0 * delta + gamma * l) * f1) / (delta * l);
    let h1 = (-delta * ra2 + mu * (1.0 - rb2)) / d;
    let h2 = (1.0 - rb2 - (2.0 * delta + gamma * l) * h1) / (delta * l);
    RobinCoeffs { f1, f2, h1, h2 }
}

#[inline]
fn linear(x: f64, x0: f64, slope: f64) -> EvalTriple {
    EvalTriple::new((x - x0) * slope, slope, 0.0)
}

/// Match operator with its network-dependent constants resolved, ready for
/// repeated evaluation of the basis functions.
#[derive(Debug, Clone)]
pub struct MatchOperator<'a> {
    theta1: &'a [f64],
    theta2: &'a [f64],
    kind: Basis,
}

#[derive(Debug, Clone, Copy)]
enum Basis {
    FirstOrder { shift: f64 },
    Dirichlet { a: f64, b: f64, n1a: f64, n1b: f64, n2a: f64, n2b: f64 },
    Mixed { a: f64, n1a: f64, n1pb: f64, n2a: f64, n2pb: f64 },
    Neumann { a: f64, b: f64, n1pa: f64, n1pb: f64, n2pa: f64, n2pb: f64 },
    Cauchy { a: f64, n1a: f64, n1pa: f64, n2a: f64, n2pa: f64 },
    Robin { a: f64, b: f64, c: RobinCoeffs },
}

impl<'a> MatchOperator<'a> {
    pub fn new(spec: &ConditionSpec, mp: &'a MatchParams) -> Result<Self> {
        spec.validate()?;
        if mp.arity() != spec.match_arity() {
            return Err(Error::MatchArity(format!(
                "{} conditions need {} match network(s), got {}",
                spec.label(),
                spec.match_arity(),
                mp.arity()
            )));
        }
        let theta2 = mp.theta2.as_ref().map_or(&[][..], NetworkParams::as_slice);
        Self::from_slices(spec, mp.theta1.as_slice(), theta2)
    }

    /// Same as [`new`](Self::new) but over raw flat network slices; `theta2`
    /// is ignored (and may be empty) for single-network conditions.
    pub fn from_slices(spec: &ConditionSpec, theta1: &'a [f64], theta2: &'a [f64]) -> Result<Self> {
        let n1 = |x| eval_flat(theta1, x);
        let n2 = |x| eval_flat(theta2, x);
        let kind = match *spec {
            ConditionSpec::FirstOrderInitial { a, .. } => Basis::FirstOrder { shift: 1.0 - n1(a).value },
            ConditionSpec::SystemInitial { .. } => {
                return Err(Error::MatchArity("system conditions must be split into per-component specs".into()))
            }
            ConditionSpec::Dirichlet { a, b, .. } => {
                Basis::Dirichlet { a, b, n1a: n1(a).value, n1b: n1(b).value, n2a: n2(a).value, n2b: n2(b).value }
            }
            ConditionSpec::MixedDN { a, b, .. } => {
                Basis::Mixed { a, n1a: n1(a).value, n1pb: n1(b).d1, n2a: n2(a).value, n2pb: n2(b).d1 }
            }
            ConditionSpec::Neumann { a, b, .. } => {
                Basis::Neumann { a, b, n1pa: n1(a).d1, n1pb: n1(b).d1, n2pa: n2(a).d1, n2pb: n2(b).d1 }
            }
            ConditionSpec::Cauchy { a, .. } => {
                let (t1, t2) = (n1(a), n2(a));
                Basis::Cauchy { a, n1a: t1.value, n1pa: t1.d1, n2a: t2.value, n2pa: t2.d1 }
            }
            ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, .. } => {
                spec.validate()?;
                Basis::Robin { a, b, c: robin_coeffs_raw(a, b, [lambda, mu, gamma, delta], theta1, theta2) }
            }
        };
        Ok(Self { theta1, theta2, kind })
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            Basis::FirstOrder { .. } => 1,
            _ => 2,
        }
    }

    /// Basis functions at `x`; only the first [`arity`](Self::arity) entries are meaningful.
    pub fn basis(&self, x: f64) -> [EvalTriple; 2] {
        let n1 = eval_flat(self.theta1, x);
        match self.kind {
            Basis::FirstOrder { shift } => [n1 + EvalTriple::constant(shift), EvalTriple::ZERO],
            Basis::Dirichlet { a, b, n1a, n1b, n2a, n2b } => {
                let n2 = eval_flat(self.theta2, x);
                let la = linear(x, b, 1.0 / (a - b));
                let lb = linear(x, a, 1.0 / (b - a));
                [la + n1 - la * n1a - lb * n1b, lb + n2 - la * n2a - lb * n2b]
            }
            Basis::Mixed { a, n1a, n1pb, n2a, n2pb } => {
                let n2 = eval_flat(self.theta2, x);
                let lin = linear(x, a, 1.0);
                [EvalTriple::constant(1.0 - n1a) + n1 - lin * n1pb, lin + n2 - EvalTriple::constant(n2a) - lin * n2pb]
            }
            Basis::Neumann { a, b, n1pa, n1pb, n2pa, n2pb } => {
                let n2 = eval_flat(self.theta2, x);
                let ca = 1.0 / (a - b);
                let cb = 1.0 / (b - a);
                let qa = EvalTriple::new(0.5 * (x - b) * (x - b) * ca, (x - b) * ca, ca);
                let qb = EvalTriple::new(0.5 * (x - a) * (x - a) * cb, (x - a) * cb, cb);
                [qa + n1 - qa * n1pa - qb * n1pb, qb + n2 - qa * n2pa - qb * n2pb]
            }
            Basis::Cauchy { a, n1a, n1pa, n2a, n2pa } => {
                let n2 = eval_flat(self.theta2, x);
                let lin = linear(x, a, 1.0);
                [EvalTriple::constant(1.0 - n1a) + n1 - lin * n1pa, lin + n2 - EvalTriple::constant(n2a) - lin * n2pa]
            }
            Basis::Robin { a, b, c } => {
                let n2 = eval_flat(self.theta2, x);
                let p1 = EvalTriple::new(2.0 * x - a - b, 2.0, 0.0);
                let p2 = EvalTriple::new((x - a) * (x - b), 2.0 * x - a - b, 2.0);
                [n1 + p1 * c.f1 + p2 * c.f2, n2 + p1 * c.h1 + p2 * c.h2]
            }
        }
    }

    /// `sum_j values[j] * B_j(x)`.
    pub fn apply(&self, values: &[f64], x: f64) -> EvalTriple {
        let basis = self.basis(x);
        values.iter().zip(basis.iter()).take(self.arity()).fold(EvalTriple::ZERO, |acc, (&v, &bj)| acc + bj * v)
    }
}

/// Evaluates the augmented match `A(x)` for `spec` with its prescribed values.
pub fn match_eval(spec: &ConditionSpec, mp: &MatchParams, x: f64) -> Result<EvalTriple> {
    let op = MatchOperator::new(spec, mp)?;
    Ok(op.apply(&spec.values(), x))
}

/// Rigid quadratic Dirichlet operator
/// `psi(a) ((x-b)/(b-a))^2 + psi(b) ((x-a)/(b-a))^2`.
pub fn rigid_match_eval(spec: &ConditionSpec, x: f64) -> Result<EvalTriple> {
    let ConditionSpec::Dirichlet { a, b, xi_a, xi_b } = *spec else {
        return Err(Error::InvalidForm("rigid match is defined for Dirichlet conditions".into()));
    };
    check_interval(a, b)?;
    let [qa, qb] = rigid_basis(a, b, x);
    Ok(qa * xi_a + qb * xi_b)
}

/// The two quadratic weights of the rigid operator at `x`.
pub(crate) fn rigid_basis(a: f64, b: f64, x: f64) -> [EvalTriple; 2] {
    let l = b - a;
    let l2 = l * l;
    let (ua, ub) = ((x - b) / l, (x - a) / l);
    [EvalTriple::new(ua * ua, 2.0 * (x - b) / l2, 2.0 / l2), EvalTriple::new(ub * ub, 2.0 * (x - a) / l2, 2.0 / l2)]
}

/// Boundary value `psi(a)` that makes the rigid-operator trial satisfy
/// `Psi_T'(a) = xi_a_prime`.
pub fn reduce_mixed_to_dirichlet(w: &NetworkParams, a: f64, b: f64, xi_a_prime: f64) -> Result<f64> {
    check_interval(a, b)?;
    let n = w.eval(a);
    Ok(n.value + 0.5 * (b - a) * (n.d1 - xi_a_prime))
}

/// Boundary values `(psi(a), psi(b))` that make the rigid-operator trial
/// satisfy general Robin functionals.
pub fn reduce_robin_to_dirichlet(w: &NetworkParams, spec: &ConditionSpec) -> Result<(f64, f64)> {
    let ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, xi_a, xi_b } = *spec else {
        return Err(Error::InvalidForm("Robin reduction needs a Robin spec".into()));
    };
    check_interval(a, b)?;
    reduce_linear_to_dirichlet(a, b, [lambda, mu, gamma, delta], [xi_a, xi_b], w.eval(a), w.eval(b))
}

/// Rigid-trial boundary values for `c[0] psi(a) + c[1] psi'(a) = xi[0]`,
/// `c[2] psi(b) + c[3] psi'(b) = xi[1]`, given the main network at both ends.
pub(crate) fn reduce_linear_to_dirichlet(
    a: f64,
    b: f64,
    c: [f64; 4],
    xi: [f64; 2],
    n_a: EvalTriple,
    n_b: EvalTriple,
) -> Result<(f64, f64)> {
    let [lambda, mu, gamma, delta] = c;
    let l = b - a;
    let den_a = l * lambda - 2.0 * mu;
    let den_b = l * gamma + 2.0 * delta;
    if den_a == 0.0 || den_b == 0.0 {
        return Err(Error::DegenerateCondition(format!(
            "rigid reduction denominators vanish ((b-a)lambda-2mu = {den_a}, (b-a)gamma+2delta = {den_b})"
        )));
    }
    let psi_a = (l * (xi[0] - mu * n_a.d1) - 2.0 * mu * n_a.value) / den_a;
    let psi_b = (l * (xi[1] - delta * n_b.d1) + 2.0 * delta * n_b.value) / den_b;
    Ok((psi_a, psi_b))
}

/// Coefficients `(lambda, mu, gamma, delta)` that express a spec as linear
/// functionals for the rigid reduction, if the reduction applies.
pub(crate) fn rigid_coefficients(spec: &ConditionSpec) -> Option<(f64, f64, [f64; 4])> {
    match *spec {
        ConditionSpec::MixedDN { a, b, .. } => Some((a, b, [1.0, 0.0, 0.0, 1.0])),
        ConditionSpec::Robin { a, b, lambda, mu, gamma, delta, .. } => Some((a, b, [lambda, mu, gamma, delta])),
        _ => None,
    }
}
