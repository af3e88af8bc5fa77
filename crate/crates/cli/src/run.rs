//! Experiment batches: seeded repeats, CSV rows, summary statistics and the
//! trained-parameter sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anf_core::grids::{test_grid, Grid};
use anf_core::metrics::{estimated_deviation_metrics, report, Dataset, DeviationMetrics, MetricsReport};
use anf_core::train::repeat_seed;
use anf_core::{estimate_bound, BoundConfig, BoundResult, Problem, SystemForm, TrainConfig};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;

/// Version of the CSV header and of the sidecar records.
pub const SCHEMA_VERSION: u32 = 1;

const LEAD_COLUMNS: [&str; 8] = ["schema_version", "problem", "condition", "method", "params", "m_tr", "grid", "seed"];
const AGGREGATE_METRICS: [&str; 10] = [
    "mse_train",
    "mxe_train",
    "mse_test",
    "mxe_test",
    "msd_train",
    "mxd_train",
    "msd_test",
    "mxd_test",
    "msed",
    "mxed",
];
const COMPONENT_METRICS: [&str; 6] = ["msd_train", "mxd_train", "msd_test", "mxd_test", "msed", "mxed"];
const TAIL_COLUMNS: [&str; 3] = ["evals", "wall_time_s", "error"];

/// Real-valued metric columns for a problem with `components` unknowns.
pub fn metric_columns(components: usize) -> Vec<String> {
    let mut out: Vec<String> = AGGREGATE_METRICS.iter().map(|s| s.to_string()).collect();
    if components > 1 {
        for k in 1..=components {
            out.extend(COMPONENT_METRICS.iter().map(|m| format!("{m}_{k}")));
        }
    }
    out.push("s2".into());
    out.push("delta2".into());
    out
}

/// The full CSV header.
pub fn header(components: usize) -> Vec<String> {
    let mut h: Vec<String> = LEAD_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(metric_columns(components));
    h.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    h
}

/// Outcome of one repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub repeat: usize,
    pub seed: u64,
    /// Aligned with [`metric_columns`]; `None` is written as an empty field.
    pub metrics: Vec<Option<f64>>,
    pub evals: Option<usize>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
    pub theta: Option<Vec<f64>>,
}

/// Shortest round-trip decimal; empty for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

fn deviation_cells(d: Option<&DeviationMetrics>) -> (Vec<Option<f64>>, [Option<f64>; 2]) {
    match d {
        Some(d) => (
            d.components.iter().flat_map(|c| [Some(c.mean), Some(c.max)]).collect(),
            [Some(d.total.mean), Some(d.total.max)],
        ),
        None => (Vec::new(), [None, None]),
    }
}

fn metric_cells(
    components: usize,
    train: &MetricsReport,
    test: &MetricsReport,
    estimated: Option<&DeviationMetrics>,
    bound: Option<&BoundResult>,
) -> Vec<Option<f64>> {
    let (dtr_comp, dtr) = deviation_cells(train.deviation.as_ref());
    let (dte_comp, dte) = deviation_cells(test.deviation.as_ref());
    let (est_comp, est) = deviation_cells(estimated);
    let mut out = vec![
        Some(train.residual.mean),
        Some(train.residual.max),
        Some(test.residual.mean),
        Some(test.residual.max),
        dtr[0],
        dtr[1],
        dte[0],
        dte[1],
        est[0],
        est[1],
    ];
    if components > 1 {
        let pick = |v: &[Option<f64>], k: usize, j: usize| v.get(2 * k + j).copied().flatten();
        for k in 0..components {
            out.extend([
                pick(&dtr_comp, k, 0),
                pick(&dtr_comp, k, 1),
                pick(&dte_comp, k, 0),
                pick(&dte_comp, k, 1),
                pick(&est_comp, k, 0),
                pick(&est_comp, k, 1),
            ]);
        }
    }
    out.push(bound.map(|b| b.s2));
    out.push(bound.map(|b| b.delta2));
    out
}

/// Everything a repeat needs besides its index.
pub struct Batch<'a> {
    pub cfg: &'a RunConfig,
    pub problem: &'a Problem,
    pub template: &'a SystemForm,
    pub train_grid: &'a Grid,
    pub test_grid: &'a Grid,
}

/// A trained repeat with its metrics and optional bound.
pub struct Solved {
    pub form: SystemForm,
    pub evals: usize,
    pub bound: Option<BoundResult>,
    pub metrics: Vec<Option<f64>>,
}

impl<'a> Batch<'a> {
    pub fn new(
        cfg: &'a RunConfig,
        problem: &'a Problem,
        template: &'a SystemForm,
        train_grid: &'a Grid,
        test_grid: &'a Grid,
    ) -> Self {
        Self { cfg, problem, template, train_grid, test_grid }
    }

    pub fn solve(&self, seed: u64) -> Result<Solved> {
        let cfg = self.cfg;
        let tcfg = TrainConfig {
            budget: cfg.budget,
            restarts: cfg.restarts,
            schedule: cfg.schedule.clone(),
            zeta: cfg.zeta,
            seed,
            ..TrainConfig::default()
        };
        let trained = anf_core::train(self.problem, self.template, self.train_grid, &tcfg)?;
        let bound = match cfg.bound {
            Some(k) => {
                let bcfg =
                    BoundConfig { schedule: cfg.schedule.clone(), ..BoundConfig::new(k, cfg.bound_budget, seed) };
                Some(estimate_bound(self.problem, &trained.form, self.train_grid, self.test_grid, &bcfg)?)
            }
            None => None,
        };
        let train = report(self.problem, &trained.form, self.train_grid, Dataset::Train, None)?;
        let test = report(self.problem, &trained.form, self.test_grid, Dataset::Test, None)?;
        let estimated = match &bound {
            Some(b) if b.valid => Some(estimated_deviation_metrics(b)?),
            _ => None,
        };
        let metrics = metric_cells(self.problem.n_components(), &train, &test, estimated.as_ref(), bound.as_ref());
        Ok(Solved { form: trained.form, evals: trained.evals, bound, metrics })
    }

    fn record(&self, repeat: usize) -> Record {
        let seed = repeat_seed(self.cfg.seed, repeat);
        let start = Instant::now();
        let outcome = self.solve(seed);
        let wall = self.cfg.timing.then(|| start.elapsed().as_secs_f64());
        match outcome {
            Ok(s) => Record {
                repeat,
                seed,
                metrics: s.metrics,
                evals: Some(s.evals),
                wall_time_s: wall,
                error: None,
                theta: Some(s.form.params()),
            },
            Err(e) => Record {
                repeat,
                seed,
                metrics: vec![None; metric_columns(self.problem.n_components()).len()],
                evals: None,
                wall_time_s: wall,
                error: Some(format!("{e:#}")),
                theta: None,
            },
        }
    }
}

/// Result of [`run`].
#[derive(Debug)]
pub struct RunReport {
    pub records: Vec<Record>,
    pub failed: usize,
}

/// Executes every repeat of `cfg` and writes the CSV, the JSON summary and,
/// when requested, the parameter sidecar.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let template = SystemForm::template(&problem.components, cfg.method, cfg.params)?;
    let train_grid = Grid::new(cfg.grid, problem.a, problem.b, cfg.points)?;
    let test = test_grid(problem.a, problem.b)?;
    let batch = Batch::new(cfg, &problem, &template, &train_grid, &test);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let records: Vec<Record> = pool.install(|| (0..cfg.repeats).into_par_iter().map(|i| batch.record(i)).collect());

    write_csv(&cfg.output, cfg, problem.n_components(), &records)?;
    write_summary(&cfg.summary_path(), cfg, problem.n_components(), &records)?;
    if cfg.save_params {
        write_params(&cfg.params_path(), cfg, &records)?;
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    Ok(RunReport { records, failed })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes rows in repeat order.
pub fn write_csv(path: &Path, cfg: &RunConfig, components: usize, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header(components))?;
    for r in records {
        let mut row = vec![
            SCHEMA_VERSION.to_string(),
            cfg.problem.clone(),
            cfg.variant.clone(),
            cfg.method.as_str().to_string(),
            cfg.params.to_string(),
            cfg.points.to_string(),
            cfg.grid.as_str().to_string(),
            r.seed.to_string(),
        ];
        row.extend(r.metrics.iter().map(|v| fmt_opt(*v)));
        row.push(r.evals.map_or_else(String::new, |e| e.to_string()));
        row.push(fmt_opt(r.wall_time_s));
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Descriptive statistics over the finite entries of `values`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let std = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Some(Stats { count: n, min: v[0], max: v[n - 1], mean, median, std })
}

pub fn write_summary(path: &Path, cfg: &RunConfig, components: usize, records: &[Record]) -> Result<()> {
    let mut metrics = serde_json::Map::new();
    let columns = metric_columns(components);
    let evals: Vec<f64> = records.iter().filter_map(|r| r.evals.map(|e| e as f64)).collect();
    let mut all: Vec<(String, Vec<f64>)> = columns
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), records.iter().filter_map(|r| r.metrics[j]).collect()))
        .collect();
    all.push(("evals".into(), evals));
    for (name, values) in all {
        let entry = match stats(&values) {
            Some(s) => json!({
                "count": s.count, "min": s.min, "max": s.max,
                "mean": s.mean, "median": s.median, "std": s.std,
            }),
            None => json!({ "count": 0 }),
        };
        metrics.insert(name, entry);
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "problem": cfg.problem,
        "condition": cfg.variant,
        "method": cfg.method.as_str(),
        "grid": cfg.grid.as_str(),
        "m_tr": cfg.points,
        "params": cfg.params,
        "repeats": cfg.repeats,
        "seed": cfg.seed,
        "budget": cfg.budget,
        "restarts": cfg.restarts,
        "zeta": cfg.zeta,
        "schedule": cfg.schedule.to_string(),
        "bound_params": cfg.bound,
        "failed": records.iter().filter(|r| r.error.is_some()).count(),
        "metrics": metrics,
    });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Trained parameters of one repeat, enough to rebuild the form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub schema_version: u32,
    pub problem: String,
    pub variant: String,
    pub method: String,
    pub grid: String,
    pub points: usize,
    pub params: usize,
    pub zeta: f64,
    pub repeat: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
}

impl ParamRecord {
    pub fn new(cfg: &RunConfig, repeat: usize, seed: u64, theta: Vec<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: cfg.problem.clone(),
            variant: cfg.variant.clone(),
            method: cfg.method.as_str().to_string(),
            grid: cfg.grid.as_str().to_string(),
            points: cfg.points,
            params: cfg.params,
            zeta: cfg.zeta,
            repeat,
            seed,
            theta,
        }
    }
}

/// One JSON object per successful repeat.
pub fn write_params(path: &Path, cfg: &RunConfig, records: &[Record]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        if let Some(theta) = &r.theta {
            serde_json::to_writer(&mut w, &ParamRecord::new(cfg, r.repeat, r.seed, theta.clone()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<Vec<ParamRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ParamRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad parameter record", path.display(), n + 1))?;
        if rec.schema_version != SCHEMA_VERSION {
            bail!("{}:{}: unsupported schema version {}", path.display(), n + 1, rec.schema_version);
        }
        out.push(rec);
    }
    Ok(out)
}
