//! Run configuration: a flat `key = value` file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anf_core::grids::GridKind;
use anf_core::problems::{levels, registry, variants};
use anf_core::train::DEFAULT_BUDGET;
use anf_core::{Mode, Problem, Schedule};
use anyhow::{anyhow, bail, Context, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ANF_OUTPUT_DIR";

const KEYS: &[&str] = &[
    "problem",
    "variant",
    "method",
    "grid",
    "points",
    "params",
    "level",
    "repeats",
    "seed",
    "budget",
    "restarts",
    "zeta",
    "schedule",
    "bound",
    "bound_params",
    "bound_budget",
    "output",
    "summary",
    "save_params",
    "timing",
    "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    fn index(self) -> usize {
        match self {
            Level::Low => 0,
            Level::Medium => 1,
            Level::High => 2,
        }
    }
}

impl FromStr for Level {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "1" => Ok(Level::Low),
            "medium" | "2" => Ok(Level::Medium),
            "high" | "3" => Ok(Level::High),
            other => bail!("unknown level `{other}` (expected low, medium or high)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub variant: String,
    pub method: Mode,
    pub grid: GridKind,
    /// Training points `M_tr`.
    pub points: usize,
    /// Trial parameters `|theta|` over all networks.
    pub params: usize,
    pub repeats: usize,
    pub seed: u64,
    pub budget: usize,
    pub restarts: usize,
    pub zeta: f64,
    pub schedule: Schedule,
    /// Perturbation parameters, when the deviation bound is requested.
    pub bound: Option<usize>,
    pub bound_budget: usize,
    pub output: PathBuf,
    pub summary: Option<PathBuf>,
    pub save_params: bool,
    /// Record wall time per repeat; off by default so reruns are byte-identical.
    pub timing: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{}`", n + 1, raw.trim()))?;
        insert(&mut out, k, v).with_context(|| format!("line {}", n + 1))?;
    }
    Ok(out)
}

fn insert(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    let key = key.trim().to_ascii_lowercase().replace('-', "_");
    if !KEYS.contains(&key.as_str()) {
        bail!("unknown key `{key}`");
    }
    map.insert(key, value.trim().to_string());
    Ok(())
}

/// Applies `key=value` overrides on top of `map`.
pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not `key=value`"))?;
        insert(map, k, v).with_context(|| format!("override `{o}`"))?;
    }
    Ok(())
}

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key).map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid `{key}` value `{v}`: {e}"))).transpose()
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    match map.get(key).map(|v| v.to_ascii_lowercase()) {
        None => Ok(false),
        Some(v) => match v.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => bail!("invalid `{key}` value `{v}` (expected true or false)"),
        },
    }
}

/// Default output directory: `$ANF_OUTPUT_DIR`, else `results`.
pub fn output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut map = parse_pairs(&text).with_context(|| format!("parsing {}", path.display()))?;
        apply_overrides(&mut map, overrides)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let problem = map.get("problem").ok_or_else(|| anyhow!("missing required key `problem`"))?.to_ascii_lowercase();
        let variant = match map.get("variant") {
            Some(v) => v.clone(),
            None => variants(&problem)?[0].to_string(),
        };
        // resolves aliases and rejects unknown problems early
        let p = registry(&problem, &variant)?;

        let level: Option<Level> = parse(map, "level")?;
        let table = levels(&p.name)?;
        let from_level = |what: &str, pick: fn(&anf_core::problems::Levels, usize) -> usize| {
            level.map(|l| pick(&table, l.index())).ok_or_else(|| anyhow!("set `{what}` or `level`"))
        };
        let points = match parse(map, "points")? {
            Some(v) => v,
            None => from_level("points", |t, i| t.points[i])?,
        };
        let params = match parse(map, "params")? {
            Some(v) => v,
            None => from_level("params", |t, i| t.params[i])?,
        };

        let bound = match map.get("bound").map(|v| v.to_ascii_lowercase()) {
            None => None,
            Some(v) if v == "off" || v == "false" || v == "no" => None,
            Some(v) if v == "on" || v == "true" || v == "yes" => {
                Some(parse(map, "bound_params")?.unwrap_or_else(|| default_bound_params(params, p.n_components())))
            }
            Some(v) => bail!("invalid `bound` value `{v}` (expected on or off)"),
        };
        let budget = parse(map, "budget")?.unwrap_or(DEFAULT_BUDGET);
        let method: Mode = parse(map, "method")?.unwrap_or(Mode::Augmented);
        let grid: GridKind = parse(map, "grid")?.unwrap_or(GridKind::Chebyshev);
        let output = match map.get("output") {
            Some(o) => PathBuf::from(o),
            None => output_dir().join(format!(
                "{}_{}_{}_{}{}_p{}.csv",
                p.name,
                p.variant,
                method.as_str(),
                grid.as_str(),
                points,
                params
            )),
        };

        let cfg = Self {
            problem: p.name.clone(),
            variant: p.variant.clone(),
            method,
            grid,
            points,
            params,
            repeats: parse(map, "repeats")?.unwrap_or(100),
            seed: parse(map, "seed")?.unwrap_or(0),
            budget,
            restarts: parse(map, "restarts")?.unwrap_or(1),
            zeta: parse(map, "zeta")?.unwrap_or(1.0),
            schedule: parse(map, "schedule")?.unwrap_or_default(),
            bound,
            bound_budget: parse(map, "bound_budget")?.unwrap_or(budget),
            output,
            summary: map.get("summary").map(PathBuf::from),
            save_params: parse_bool(map, "save_params")?,
            timing: parse_bool(map, "timing")?,
            threads: parse(map, "threads")?.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params > self.points {
            bail!(
                "{} parameters exceed {} training points; overparameterized runs are excluded",
                self.params,
                self.points
            );
        }
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        if self.restarts == 0 {
            bail!("restarts must be at least 1");
        }
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            bail!("zeta must be non-negative");
        }
        if let Some(b) = self.bound {
            if self.method == Mode::Baseline {
                bail!("the deviation bound needs a trial that meets its conditions exactly, not the baseline");
            }
            if self.bound_budget == 0 {
                bail!("bound_budget must be at least 1");
            }
            if b == 0 || b % 3 != 0 {
                bail!("bound_params must be a positive multiple of 3");
            }
        }
        // builds the template once so shape errors surface before any training
        let p = self.problem()?;
        anf_core::SystemForm::template(&p.components, self.method, self.params)?;
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(registry(&self.problem, &self.variant)?)
    }

    /// Summary path: explicit, else the CSV path with a `.json` extension.
    pub fn summary_path(&self) -> PathBuf {
        self.summary.clone().unwrap_or_else(|| self.output.with_extension("json"))
    }

    /// Parameter sidecar path next to the CSV.
    pub fn params_path(&self) -> PathBuf {
        self.output.with_extension("params.jsonl")
    }
}

/// A third of the trial's parameters, in whole neurons per component.
pub fn default_bound_params(params: usize, components: usize) -> usize {
    let unit = 3 * components;
    ((params / 3) / unit).max(1) * unit
}
