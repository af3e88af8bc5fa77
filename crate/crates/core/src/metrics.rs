//! Solution-quality measures: residual-based (MSE/MXE), exact-deviation-based
//! (MSD/MXD) and estimated-deviation-based (MSED/MXED).

use crate::bound::BoundResult;
use crate::error::{Error, Result};
use crate::grids::Grid;
use crate::problems::Problem;
use crate::trial::SystemForm;

/// Mean and maximum of a sequence of non-negative values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMax {
    pub mean: f64,
    pub max: f64,
}

/// Mean and maximum, accumulated left to right.
pub fn mean_max(values: &[f64]) -> Result<MeanMax> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        sum += v;
        if v > max {
            max = v;
        }
    }
    Ok(MeanMax { mean: sum / values.len() as f64, max })
}

/// Deviation metrics per solution component, plus the aggregate over the
/// per-point sum across components.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMetrics {
    pub components: Vec<MeanMax>,
    pub total: MeanMax,
}

fn deviation_from_squares(per_component: &[Vec<f64>]) -> Result<DeviationMetrics> {
    let m = per_component.first().map_or(0, Vec::len);
    let components = per_component.iter().map(|c| mean_max(c)).collect::<Result<Vec<_>>>()?;
    let summed: Vec<f64> = (0..m).map(|i| per_component.iter().map(|c| c[i]).sum()).collect();
    Ok(DeviationMetrics { components, total: mean_max(&summed)? })
}

/// Squared residual per point (summed over equations).
pub fn squared_residuals(problem: &Problem, sf: &SystemForm, grid: &Grid) -> Result<Vec<f64>> {
    if sf.len() != problem.n_components() {
        return Err(Error::ComponentMismatch { expected: problem.n_components(), got: sf.len() });
    }
    let prepared = sf.prepare()?;
    let mut r = vec![0.0; problem.n_equations()];
    Ok(grid
        .points()
        .iter()
        .map(|&x| {
            let t: Vec<_> = prepared.iter().map(|p| p.eval(x)).collect();
            problem.residual_into(x, &t, &mut r);
            r.iter().map(|v| v * v).sum()
        })
        .collect())
}

/// `(MSE, MXE)` over the grid.
pub fn residual_metrics(problem: &Problem, sf: &SystemForm, grid: &Grid) -> Result<MeanMax> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    mean_max(&squared_residuals(problem, sf, grid)?)
}

/// Squared deviation from the exact solution, per component then per point.
pub fn squared_deviations(problem: &Problem, sf: &SystemForm, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    if sf.len() != problem.n_components() {
        return Err(Error::ComponentMismatch { expected: problem.n_components(), got: sf.len() });
    }
    if !problem.has_exact() {
        return Err(Error::MissingExact(problem.name.clone()));
    }
    let prepared = sf.prepare()?;
    let mut out = vec![Vec::with_capacity(grid.len()); sf.len()];
    for &x in grid.points() {
        let exact = problem.exact_values(x)?;
        for ((col, p), e) in out.iter_mut().zip(&prepared).zip(exact) {
            let d = p.eval(x).value - e;
            col.push(d * d);
        }
    }
    Ok(out)
}

/// `(MSD, MXD)` per component and aggregated.
pub fn deviation_metrics(problem: &Problem, sf: &SystemForm, grid: &Grid) -> Result<DeviationMetrics> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    deviation_from_squares(&squared_deviations(problem, sf, grid)?)
}

/// `(MSED, MXED)` from the bound's evaluation points.
pub fn estimated_deviation_metrics(bound: &BoundResult) -> Result<DeviationMetrics> {
    if !bound.valid {
        return Err(Error::InvalidBound);
    }
    if bound.points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let squares: Vec<Vec<f64>> = bound.bound_abs.iter().map(|c| c.iter().map(|v| v * v).collect()).collect();
    deviation_from_squares(&squares)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataset {
    Train,
    Test,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Train => "train",
            Dataset::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dataset: Dataset,
    pub grid_size: usize,
    /// MSE and MXE.
    pub residual: MeanMax,
    /// MSD and MXD, when the exact solution is known.
    pub deviation: Option<DeviationMetrics>,
    /// MSED and MXED, when a valid bound was supplied.
    pub estimated: Option<DeviationMetrics>,
}

/// Every metric available for `sf` on `grid`.
pub fn report(
    problem: &Problem,
    sf: &SystemForm,
    grid: &Grid,
    dataset: Dataset,
    bound: Option<&BoundResult>,
) -> Result<MetricsReport> {
    let residual = residual_metrics(problem, sf, grid)?;
    let deviation = if problem.has_exact() { Some(deviation_metrics(problem, sf, grid)?) } else { None };
    let estimated = match bound {
        Some(b) if b.valid => Some(estimated_deviation_metrics(b)?),
        _ => None,
    };
    Ok(MetricsReport { dataset, grid_size: grid.len(), residual, deviation, estimated })
}
