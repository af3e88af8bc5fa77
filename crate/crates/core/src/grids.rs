//! Training and test point sets on `[a, b]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of equidistant points in every test grid.
pub const TEST_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Equidistant,
    Chebyshev,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Equidistant => "equidistant",
            GridKind::Chebyshev => "chebyshev",
        }
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equidistant" | "eq" => Ok(GridKind::Equidistant),
            "chebyshev" | "ch" => Ok(GridKind::Chebyshev),
            other => Err(Error::InvalidConfig(format!("unknown grid kind `{other}`"))),
        }
    }
}

/// Strictly ascending point set inside `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub kind: GridKind,
    pub a: f64,
    pub b: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(kind: GridKind, a: f64, b: f64, count: usize) -> Result<Self> {
        match kind {
            GridKind::Equidistant => equidistant(a, b, count),
            GridKind::Chebyshev => chebyshev(a, b, count),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInterval { a, b });
    }
    Ok(())
}

/// `x_i = a + (i - 1)(b - a)/(M - 1)`, both endpoints included.
pub fn equidistant(a: f64, b: f64, count: usize) -> Result<Grid> {
    check_interval(a, b)?;
    if count < 2 {
        return Err(Error::TooFewPoints { min: 2, got: count });
    }
    let h = (b - a) / (count - 1) as f64;
    let mut points: Vec<f64> = (0..count).map(|i| a + i as f64 * h).collect();
    // pin the last node so rounding never pushes it past b
    points[count - 1] = b;
    Ok(Grid { kind: GridKind::Equidistant, a, b, points })
}

/// Chebyshev nodes `(a+b)/2 + (b-a)/2 cos((2i-1)pi/(2M))`, returned ascending.
pub fn chebyshev(a: f64, b: f64, count: usize) -> Result<Grid> {
    check_interval(a, b)?;
    if count < 1 {
        return Err(Error::TooFewPoints { min: 1, got: count });
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let m = count as f64;
    // i = M, M-1, ..., 1 gives ascending order directly
    let points = (1..=count).rev().map(|i| mid + half * ((2.0 * i as f64 - 1.0) * PI / (2.0 * m)).cos()).collect();
    Ok(Grid { kind: GridKind::Chebyshev, a, b, points })
}

/// The fixed 1000-point equidistant grid used for all test metrics.
pub fn test_grid(a: f64, b: f64) -> Result<Grid> {
    equidistant(a, b, TEST_GRID_POINTS)
}
