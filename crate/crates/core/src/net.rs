//! Single-hidden-layer sigmoid network `N(x) = sum_i a_i * sigmoid(w_i * x + b_i)`
//! with analytic first and second derivatives in the scalar input.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};

/// Value of a scalar function of `x` together with its first two x-derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalTriple {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl EvalTriple {
    pub const ZERO: EvalTriple = EvalTriple { value: 0.0, d1: 0.0, d2: 0.0 };

    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    /// A constant function.
    pub const fn constant(value: f64) -> Self {
        Self { value, d1: 0.0, d2: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for EvalTriple {
    type Output = EvalTriple;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for EvalTriple {
    type Output = EvalTriple;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Neg for EvalTriple {
    type Output = EvalTriple;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2)
    }
}

impl Mul<f64> for EvalTriple {
    type Output = EvalTriple;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.value * rhs, self.d1 * rhs, self.d2 * rhs)
    }
}

/// One hidden neuron: output weight `a`, input weight `w`, bias `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neuron {
    pub a: f64,
    pub w: f64,
    pub b: f64,
}

/// Logistic sigmoid, saturated to exactly 0 or 1 for `|z| > 500`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z > 500.0 {
        1.0
    } else if z < -500.0 {
        0.0
    } else if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(sigma, sigma', sigma'')` at `z`.
///
/// Written in terms of `e = exp(-|z|)` so that `sigma' = e / (1 + e)^2` and
/// `1 - 2 sigma` never come from subtracting nearly equal numbers.
#[inline]
pub fn sigmoid_triple(z: f64) -> (f64, f64, f64) {
    let za = z.abs();
    if za > 500.0 {
        return (if z > 0.0 { 1.0 } else { 0.0 }, 0.0, 0.0);
    }
    let e = (-za).exp();
    let one_minus_e = if za < 0.5 { -(-za).exp_m1() } else { 1.0 - e };
    let inv = 1.0 / (1.0 + e);
    let s1 = e * inv * inv;
    let t = one_minus_e * inv; // tanh(|z| / 2)
    if z >= 0.0 {
        (inv, s1, -s1 * t)
    } else {
        (e * inv, s1, s1 * t)
    }
}

/// Evaluates a network stored as an interleaved `(a, w, b)` slice.
///
/// The slice length must be a multiple of three; trailing elements are ignored.
#[inline]
pub fn eval_flat(params: &[f64], x: f64) -> EvalTriple {
    let mut out = EvalTriple::ZERO;
    for n in params.chunks_exact(3) {
        let (a, w, b) = (n[0], n[1], n[2]);
        let (s, s1, s2) = sigmoid_triple(w * x + b);
        out.value += a * s;
        out.d1 += a * w * s1;
        out.d2 += a * w * w * s2;
    }
    out
}

/// Parameters of a network with `K` neurons, stored flat as
/// `(a_1, w_1, b_1, ..., a_K, w_K, b_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    flat: Vec<f64>,
}

impl NetworkParams {
    /// All-zero network with `k` neurons. Evaluates to zero everywhere.
    pub fn zeros(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroNeurons);
        }
        Ok(Self { flat: vec![0.0; 3 * k] })
    }

    pub fn from_flat(flat: Vec<f64>) -> Result<Self> {
        if flat.is_empty() {
            return Err(Error::ZeroNeurons);
        }
        if !flat.len().is_multiple_of(3) {
            return Err(Error::LengthMismatch { expected: 3 * flat.len().div_ceil(3), got: flat.len() });
        }
        Ok(Self { flat })
    }

    pub fn from_neurons(neurons: &[Neuron]) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::ZeroNeurons);
        }
        let flat = neurons.iter().flat_map(|n| [n.a, n.w, n.b]).collect();
        Ok(Self { flat })
    }

    /// Draws every component i.i.d. uniform on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroNeurons);
        }
        let flat = (0..3 * k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(Self { flat })
    }

    pub fn neuron_count(&self) -> usize {
        self.flat.len() / 3
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn neurons(&self) -> impl Iterator<Item = Neuron> + '_ {
        self.flat.chunks_exact(3).map(|n| Neuron { a: n[0], w: n[1], b: n[2] })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> EvalTriple {
        eval_flat(&self.flat, x)
    }
}

/// Free-function form of [`NetworkParams::eval`].
pub fn eval(params: &NetworkParams, x: f64) -> EvalTriple {
    params.eval(x)
}

/// Free-function form of [`NetworkParams::random`].
pub fn random_init<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<NetworkParams> {
    NetworkParams::random(k, rng)
}
