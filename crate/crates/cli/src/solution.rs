//! Per-point solution CSV.

use std::io::Write;

use anf_core::{BoundResult, Grid, Problem, SystemForm};
use anyhow::{bail, Result};

use crate::run::fmt_f64;

fn suffixed(name: &str, k: usize, n: usize) -> String {
    if n > 1 {
        format!("{name}_{}", k + 1)
    } else {
        name.to_string()
    }
}

/// Writes `x, psi, dpsi, exact, abs_dev, bound` for every grid point, with a
/// `_k` suffix per component for systems. Unknown values are left empty.
pub fn emit_solution<W: Write>(
    problem: &Problem,
    form: &SystemForm,
    grid: &Grid,
    bound: Option<&BoundResult>,
    out: W,
) -> Result<()> {
    let n = problem.n_components();
    let bound = bound.filter(|b| b.valid);
    if let Some(b) = bound {
        if b.points.as_slice() != grid.points() {
            bail!("bound was evaluated on a different grid");
        }
    }
    let prepared = form.prepare()?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    for k in 0..n {
        for col in ["psi", "dpsi", "exact", "abs_dev", "bound"] {
            header.push(suffixed(col, k, n));
        }
    }
    w.write_record(&header)?;
    for (i, &x) in grid.points().iter().enumerate() {
        let exact = if problem.has_exact() { Some(problem.exact_values(x)?) } else { None };
        let mut row = vec![fmt_f64(x)];
        for (k, p) in prepared.iter().enumerate() {
            let t = p.eval(x);
            let e = exact.as_ref().map(|e| e[k]);
            row.push(fmt_f64(t.value));
            row.push(fmt_f64(t.d1));
            row.push(e.map_or_else(String::new, fmt_f64));
            row.push(e.map_or_else(String::new, |e| fmt_f64((t.value - e).abs())));
            row.push(bound.map_or_else(String::new, |b| fmt_f64(b.bound_abs[k][i])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
