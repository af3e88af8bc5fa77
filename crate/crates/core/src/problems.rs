//! Benchmark ODE problems with residual operators, condition variants and
//! closed-form solutions, plus a constructor for user-defined problems.

use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

use crate::conditions::ConditionSpec;
use crate::error::{Error, Result};
use crate::net::EvalTriple;

/// Residual operator: `(x, trial triples per component, output per equation)`.
pub type ResidualFn = Arc<dyn Fn(f64, &[EvalTriple], &mut [f64]) + Send + Sync>;

/// Closed-form solution: value and derivatives per component.
pub type ExactFn = Arc<dyn Fn(f64) -> Vec<EvalTriple> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    FirstOrder,
    SecondOrder,
    System(usize),
}

impl ProblemKind {
    pub fn components(self) -> usize {
        match self {
            ProblemKind::FirstOrder | ProblemKind::SecondOrder => 1,
            ProblemKind::System(n) => n,
        }
    }
}

/// An ODE (or first-order system) on `[a, b]` with its conditions.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub variant: String,
    pub kind: ProblemKind,
    pub a: f64,
    pub b: f64,
    /// Conditions as stated on the original unknown.
    pub spec: ConditionSpec,
    /// Conditions carried by each solution component; `None` marks a component
    /// without conditions of its own.
    pub components: Vec<Option<ConditionSpec>>,
    residual: ResidualFn,
    exact: Option<ExactFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("variant", &self.variant)
            .field("kind", &self.kind)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("spec", &self.spec)
            .field("components", &self.components)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    /// User-defined problem. `components` must have one entry per unknown.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        variant: impl Into<String>,
        kind: ProblemKind,
        (a, b): (f64, f64),
        spec: ConditionSpec,
        components: Vec<Option<ConditionSpec>>,
        residual: ResidualFn,
        exact: Option<ExactFn>,
    ) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        if components.len() != kind.components() {
            return Err(Error::ComponentMismatch { expected: kind.components(), got: components.len() });
        }
        spec.validate()?;
        for c in components.iter().flatten() {
            c.validate()?;
        }
        Ok(Self { name: name.into(), variant: variant.into(), kind, a, b, spec, components, residual, exact })
    }

    pub fn n_components(&self) -> usize {
        self.kind.components()
    }

    /// Number of residual equations (one per component).
    pub fn n_equations(&self) -> usize {
        self.kind.components()
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Writes the residual of every equation at `x` into `out`.
    #[inline]
    pub fn residual_into(&self, x: f64, t: &[EvalTriple], out: &mut [f64]) {
        (self.residual)(x, t, out)
    }

    pub fn residual(&self, x: f64, t: &[EvalTriple]) -> Result<Vec<f64>> {
        if t.len() != self.n_components() {
            return Err(Error::ComponentMismatch { expected: self.n_components(), got: t.len() });
        }
        let mut out = vec![0.0; self.n_equations()];
        self.residual_into(x, t, &mut out);
        Ok(out)
    }

    /// Exact solution values and derivatives per component.
    pub fn exact(&self, x: f64) -> Result<Vec<EvalTriple>> {
        self.exact.as_ref().map(|f| f(x)).ok_or_else(|| Error::MissingExact(self.name.clone()))
    }

    /// Exact solution values only.
    pub fn exact_values(&self, x: f64) -> Result<Vec<f64>> {
        Ok(self.exact(x)?.into_iter().map(|t| t.value).collect())
    }
}

/// Training-point and parameter levels of the benchmark configuration matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Levels {
    pub points: [usize; 3],
    pub params: [usize; 3],
}

/// Problem names in registry order.
pub const PROBLEM_NAMES: [&str; 6] = ["tp1", "tp2", "tp3", "tp4", "tp5", "tp6"];

/// Canonical condition variants per problem.
pub fn variants(name: &str) -> Result<&'static [&'static str]> {
    Ok(match normalize_name(name)?.as_str() {
        "tp1" | "tp4" | "tp5" => &["IC"],
        "tp2" => &["D-D", "D-N", "N-N", "C", "R"],
        "tp3" => &["C"],
        "tp6" => &["D-D", "D-N", "N-N", "C"],
        _ => unreachable!(),
    })
}

/// Training sizes and parameter counts at the low, medium and high levels.
pub fn levels(name: &str) -> Result<Levels> {
    Ok(match normalize_name(name)?.as_str() {
        "tp1" => Levels { points: [40, 80, 160], params: [36, 72, 144] },
        "tp2" | "tp3" => Levels { points: [90, 180, 270], params: [90, 180, 270] },
        "tp4" | "tp5" => Levels { points: [70, 130, 250], params: [60, 120, 240] },
        "tp6" => Levels { points: [180, 270, 360], params: [180, 270, 360] },
        _ => unreachable!(),
    })
}

fn normalize_name(name: &str) -> Result<String> {
    let n = name.trim().to_ascii_lowercase();
    let n = n.strip_prefix("test-problem-").map(|s| format!("tp{s}")).unwrap_or(n);
    if PROBLEM_NAMES.contains(&n.as_str()) {
        Ok(n)
    } else {
        Err(Error::UnknownProblem(name.to_string()))
    }
}

fn normalize_variant(problem: &str, variant: &str) -> Result<&'static str> {
    let v = variant.trim().to_ascii_uppercase().replace('_', "-");
    let known = variants(problem)?;
    let canonical = match v.as_str() {
        "" | "DEFAULT" => known[0],
        "D" if known[0] == "IC" => "IC",
        "DD" | "DIRICHLET" => "D-D",
        "DN" | "MIXED" => "D-N",
        "NN" | "NEUMANN" => "N-N",
        "CAUCHY" => "C",
        "ROBIN" => "R",
        other => known.iter().copied().find(|k| *k == other).unwrap_or(""),
    };
    known
        .iter()
        .copied()
        .find(|k| *k == canonical)
        .ok_or_else(|| Error::UnknownVariant { problem: problem.to_string(), variant: variant.to_string() })
}

/// Looks up a benchmark problem by name and condition variant.
pub fn registry(name: &str, variant: &str) -> Result<Problem> {
    let name = normalize_name(name)?;
    let variant = normalize_variant(&name, variant)?;
    match name.as_str() {
        "tp1" => tp1(),
        "tp2" => tp2(variant),
        "tp3" => tp3(),
        "tp4" => tp4(),
        "tp5" => tp5(),
        "tp6" => tp6(variant),
        _ => unreachable!(),
    }
}

/// Every registered (problem, variant) pair.
pub fn all_problems() -> Vec<Problem> {
    PROBLEM_NAMES.iter().flat_map(|n| variants(n).unwrap().iter().map(move |v| registry(n, v).unwrap())).collect()
}

const TP1_C: f64 = 2500.0 / 2501.0;
const TP1_S: f64 = 50.0 / 2501.0;

fn tp1() -> Result<Problem> {
    let spec = ConditionSpec::FirstOrderInitial { a: 0.0, xi_a: 0.15 };
    Problem::new(
        "tp1",
        "IC",
        ProblemKind::FirstOrder,
        (0.0, 1.5),
        spec.clone(),
        vec![Some(spec)],
        Arc::new(|x, t, r| r[0] = t[0].d1 + 50.0 * (t[0].value - x.cos())),
        Some(Arc::new(|x| {
            let k = 0.15 - TP1_C;
            let e = (-50.0 * x).exp();
            let (s, c) = x.sin_cos();
            vec![EvalTriple::new(
                k * e + TP1_S * s + TP1_C * c,
                -50.0 * k * e + TP1_S * c - TP1_C * s,
                2500.0 * k * e - TP1_S * s - TP1_C * c,
            )]
        })),
    )
}

/// `u = 1/(10 - x)` with `u' = u^2`, `u'' = 2u^3`.
fn tp2_exact(x: f64) -> EvalTriple {
    let u = 1.0 / (10.0 - x);
    EvalTriple::new(u, u * u, 2.0 * u * u * u)
}

fn tp2_spec(variant: &str) -> Result<ConditionSpec> {
    let (a, b) = (0.0, 9.5);
    let (ea, eb) = (tp2_exact(a), tp2_exact(b));
    Ok(match variant {
        "D-D" => ConditionSpec::Dirichlet { a, b, xi_a: ea.value, xi_b: eb.value },
        "D-N" => ConditionSpec::MixedDN { a, b, xi_a: ea.value, xi_b: eb.d1 },
        "N-N" => ConditionSpec::Neumann { a, b, xi_a: ea.d1, xi_b: eb.d1 },
        "C" => ConditionSpec::Cauchy { a, xi0: ea.value, xi1: ea.d1 },
        "R" => ConditionSpec::robin(a, b, 1.0, 1.0, 1.0, 1.0, ea.value + ea.d1, eb.value + eb.d1)?,
        _ => unreachable!(),
    })
}

fn tp2(variant: &str) -> Result<Problem> {
    let spec = tp2_spec(variant)?;
    Problem::new(
        "tp2",
        variant,
        ProblemKind::SecondOrder,
        (0.0, 9.5),
        spec.clone(),
        vec![Some(spec)],
        Arc::new(|_, t, r| {
            let p = t[0];
            r[0] = p.d2 - p.value * p.d1 - p.value * p.value * p.value;
        }),
        Some(Arc::new(|x| vec![tp2_exact(x)])),
    )
}

/// `J_0` and its first two derivatives from the power series
/// `sum_k (-1)^k (x/2)^{2k} / (k!)^2`, differentiated term by term.
pub fn bessel_j0(x: f64) -> EvalTriple {
    let q = 0.25 * x * x;
    let mut out = EvalTriple::new(1.0, 0.0, 0.0);
    // r = c_k x^{2k-2}; the k-th term is r x^2, so x = 0 needs no division
    let mut r = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        r *= if k == 1 { -0.25 } else { -q / (kf * kf) };
        out.value += r * x * x;
        out.d1 += 2.0 * kf * r * x;
        out.d2 += 2.0 * kf * (2.0 * kf - 1.0) * r;
        if kf > x.abs() && (4.0 * kf * kf * r).abs() * (1.0 + x * x) < 1e-17 {
            break;
        }
    }
    out
}

fn tp3() -> Result<Problem> {
    let spec = ConditionSpec::Cauchy { a: 0.0, xi0: 1.0, xi1: 0.0 };
    Problem::new(
        "tp3",
        "C",
        ProblemKind::SecondOrder,
        (0.0, 10.0),
        spec.clone(),
        vec![Some(spec)],
        Arc::new(|x, t, r| {
            let p = t[0];
            r[0] = x * x * p.d2 + x * p.d1 + x * x * p.value;
        }),
        Some(Arc::new(|x| vec![bessel_j0(x)])),
    )
}

fn system_problem(
    name: &str,
    variant: &str,
    (a, b): (f64, f64),
    spec: ConditionSpec,
    components: Vec<Option<ConditionSpec>>,
    residual: ResidualFn,
    exact: ExactFn,
) -> Result<Problem> {
    let n = components.len();
    Problem::new(name, variant, ProblemKind::System(n), (a, b), spec, components, residual, Some(exact))
}

fn initial_system(a: f64, xi: Vec<f64>) -> (ConditionSpec, Vec<Option<ConditionSpec>>) {
    let spec = ConditionSpec::SystemInitial { a, xi };
    let comps = spec.component_specs().into_iter().map(Some).collect();
    (spec, comps)
}

fn tp4() -> Result<Problem> {
    let (spec, comps) = initial_system(0.0, vec![0.0, 1.0]);
    system_problem(
        "tp4",
        "IC",
        (0.0, 3.0),
        spec,
        comps,
        Arc::new(|x, t, r| {
            let (p1, p2) = (t[0], t[1]);
            let s = x.sin();
            r[0] = p1.d1 - (x.cos() + p1.value * p1.value + p2.value - (1.0 + x * x + s * s));
            r[1] = p2.d1 - (2.0 * x - (1.0 + x * x) * s + p1.value * p2.value);
        }),
        Arc::new(|x| {
            let (s, c) = x.sin_cos();
            vec![EvalTriple::new(s, c, -s), EvalTriple::new(1.0 + x * x, 2.0 * x, 2.0)]
        }),
    )
}

fn tp5() -> Result<Problem> {
    let (spec, comps) = initial_system(0.0, vec![4.0 / 3.0 * E, 0.0]);
    system_problem(
        "tp5",
        "IC",
        (0.0, 5.0),
        spec,
        comps,
        Arc::new(|_, t, r| {
            let (p1, p2) = (t[0].value, t[1].value);
            r[0] = t[0].d1 - (-10.0 * p1 + 6.0 * p2);
            r[1] = t[1].d1 - (13.5 * p1 - 10.0 * p2);
        }),
        Arc::new(|x| {
            let (e1, e19) = ((-x).exp(), (-19.0 * x).exp());
            let k = 2.0 / 3.0 * E;
            vec![
                EvalTriple::new(k * (e1 + e19), k * (-e1 - 19.0 * e19), k * (e1 + 361.0 * e19)),
                EvalTriple::new(E * (e1 - e19), E * (-e1 + 19.0 * e19), E * (e1 - 361.0 * e19)),
            ]
        }),
    )
}

/// TP2 reduced to `psi_1' = psi_2`, `psi_2' = psi_1 psi_2 + psi_1^3`.
///
/// Conditions on `psi` are moved onto the components: values of `psi` pin
/// `psi_1`, slopes of `psi` pin `psi_2`.
fn tp6(variant: &str) -> Result<Problem> {
    let (a, b) = (0.0, 9.5);
    let (ea, eb) = (tp2_exact(a), tp2_exact(b));
    let spec = tp2_spec(variant)?;
    let comps = match variant {
        "D-D" => vec![Some(ConditionSpec::Dirichlet { a, b, xi_a: ea.value, xi_b: eb.value }), None],
        "N-N" => vec![None, Some(ConditionSpec::Dirichlet { a, b, xi_a: ea.d1, xi_b: eb.d1 })],
        "D-N" => vec![
            Some(ConditionSpec::FirstOrderInitial { a, xi_a: ea.value }),
            Some(ConditionSpec::FirstOrderInitial { a: b, xi_a: eb.d1 }),
        ],
        "C" => vec![
            Some(ConditionSpec::FirstOrderInitial { a, xi_a: ea.value }),
            Some(ConditionSpec::FirstOrderInitial { a, xi_a: ea.d1 }),
        ],
        _ => unreachable!(),
    };
    system_problem(
        "tp6",
        variant,
        (a, b),
        spec,
        comps,
        Arc::new(|_, t, r| {
            let (p1, p2) = (t[0].value, t[1].value);
            r[0] = t[0].d1 - p2;
            r[1] = t[1].d1 - (p1 * p2 + p1 * p1 * p1);
        }),
        Arc::new(|x| {
            let u = tp2_exact(x);
            let u2 = EvalTriple::new(u.value * u.value, 2.0 * u.value * u.d1, 2.0 * (u.d1 * u.d1 + u.value * u.d2));
            vec![u, u2]
        }),
    )
}
