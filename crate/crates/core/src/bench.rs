//! Monte Carlo scenarios and the mean/sd and MSE tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::standardize;
use crate::simulate::{
    replicate_rng, simulate_pair_with, AmountModel, ImpulseSpec, RegionFile, RegionParams, DEFAULT_SIGMA_D,
};
use crate::tde::{estimate_many, restrict_grid, EstimatorSpec, PathSettings, NAMES};

pub const DEFAULT_REPS: usize = 200;
pub const DEFAULT_SUPPORT: (i64, i64) = (110, 183);

/// One Monte Carlo cell: a region, a delay and an amount scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub region: RegionParams,
    pub tau: i64,
    /// Mean of the exponential rainfall amounts.
    pub lambda: f64,
    pub n: usize,
    pub reps: usize,
    pub grid_fraction: f64,
    pub estimators: Vec<EstimatorSpec>,
    pub root_seed: u64,
    pub sigma_d: f64,
    /// Support `[start, end)` of the carrier impulse.
    pub support: (i64, i64),
    /// Keep every replicate's outcome in the result.
    pub keep_raw: bool,
}

impl ScenarioConfig {
    pub fn new(region: RegionParams, tau: i64, lambda: f64) -> Self {
        ScenarioConfig {
            region,
            tau,
            lambda,
            n: 366,
            reps: DEFAULT_REPS,
            grid_fraction: default_grid_fraction(366, tau),
            estimators: EstimatorSpec::all(),
            root_seed: 0,
            sigma_d: DEFAULT_SIGMA_D,
            support: DEFAULT_SUPPORT,
            keep_raw: false,
        }
    }

    pub fn impulse(&self) -> ImpulseSpec {
        ImpulseSpec {
            n: self.n,
            support_start: self.support.0,
            support_end: self.support.1,
            tau: self.tau,
            sigma_d: self.sigma_d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.grid_fraction > 0.0 && self.grid_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid_fraction {} outside (0, 1]",
                self.grid_fraction
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Empty("estimator list".into()));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        self.region.validate()?;
        AmountModel::Scenario { mean: self.lambda }.validate()?;
        self.impulse().validate()?;
        restrict_grid(self.n, self.grid_fraction)?;
        Ok(())
    }
}

/// 40% of the lag range, widened to 50% (then the full range) when `tau`
/// falls outside it.
pub fn default_grid_fraction(n: usize, tau: i64) -> f64 {
    for f in [0.4, 0.5] {
        if let Ok(g) = restrict_grid(n, f) {
            if g.contains(tau) {
                return f;
            }
        }
    }
    1.0
}

/// Outcome of one replicate for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Lag(i64),
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStats {
    pub estimator: String,
    pub mean: Option<f64>,
    /// Sample sd (divisor `R − 1`; zero for a single replicate).
    pub sd: Option<f64>,
    pub mse: Option<f64>,
    pub scored: usize,
    pub failure_count: usize,
    pub raw: Option<Vec<Outcome>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub region: String,
    pub tau: i64,
    pub lambda: f64,
    pub reps: usize,
    pub root_seed: u64,
    pub grid_fraction: f64,
    pub stats: Vec<EstimatorStats>,
}

impl ScenarioResult {
    pub fn get(&self, estimator: &str) -> Option<&EstimatorStats> {
        self.stats.iter().find(|s| s.estimator == estimator)
    }
}

/// `(1/R) Σ (lag_r − τ)²`.
pub fn mse_from_results(lags: &[f64], true_tau: f64) -> Result<f64> {
    if lags.is_empty() {
        return Err(Error::Empty("no scored replicates".into()));
    }
    Ok(lags.iter().map(|l| (l - true_tau).powi(2)).sum::<f64>() / lags.len() as f64)
}

fn summarize(name: String, outcomes: Vec<Outcome>, tau: i64, keep_raw: bool) -> EstimatorStats {
    let lags: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Lag(l) => Some(*l as f64),
            Outcome::Failed(_) => None,
        })
        .collect();
    let scored = lags.len();
    let (mean, sd, mse) = if scored == 0 {
        (None, None, None)
    } else {
        let m = lags.iter().sum::<f64>() / scored as f64;
        let sd = if scored > 1 {
            (lags.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (scored - 1) as f64).sqrt()
        } else {
            0.0
        };
        (Some(m), Some(sd), mse_from_results(&lags, tau as f64).ok())
    };
    EstimatorStats {
        estimator: name,
        mean,
        sd,
        mse,
        scored,
        failure_count: outcomes.len() - scored,
        raw: keep_raw.then_some(outcomes),
    }
}

/// Simulates `reps` pairs and runs every estimator on each of them.
///
/// Replicate `r` draws from `replicate_rng(root_seed, r)`, so a cell's
/// result does not depend on thread scheduling, and cells sharing a seed
/// see common random numbers.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    config.validate()?;
    let tm = config.region.transitions()?;
    let amounts = AmountModel::Scenario { mean: config.lambda };
    let spec = config.impulse();
    let grid = restrict_grid(config.n, config.grid_fraction)?;
    let k = config.estimators.len();
    let per_rep: Vec<Vec<Outcome>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.root_seed, r);
            let pair = simulate_pair_with(&spec, &tm, &amounts, &mut rng)
                .and_then(|p| Ok((standardize(&p.x)?, standardize(&p.y)?)));
            match pair {
                Ok((x, y)) => estimate_many(&x, &y, &grid, &config.estimators, PathSettings::default())
                    .into_iter()
                    .map(|res| match res {
                        Ok(t) => Outcome::Lag(t.lag_hat),
                        Err(e) => Outcome::Failed(e),
                    })
                    .collect(),
                Err(e) => vec![Outcome::Failed(e); k],
            }
        })
        .collect();
    let mut columns: Vec<Vec<Outcome>> = vec![Vec::with_capacity(config.reps); k];
    for rep in per_rep {
        for (col, o) in columns.iter_mut().zip(rep) {
            col.push(o);
        }
    }
    let stats = config
        .estimators
        .iter()
        .zip(columns)
        .map(|(e, outcomes)| summarize(e.to_string(), outcomes, config.tau, config.keep_raw))
        .collect();
    Ok(ScenarioResult {
        region: config.region.name.clone(),
        tau: config.tau,
        lambda: config.lambda,
        reps: config.reps,
        root_seed: config.root_seed,
        grid_fraction: config.grid_fraction,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    MeanSd,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidParameter(format!("unknown format '{other}'"))),
        }
    }
}

/// Position of an estimator name in table order; custom names go last.
fn estimator_rank(name: &str) -> usize {
    NAMES.iter().position(|n| *n == name).unwrap_or(NAMES.len())
}

struct Layout<'a> {
    regions: Vec<&'a str>,
    columns: Vec<(i64, f64)>,
    cells: BTreeMap<(&'a str, String, usize), &'a EstimatorStats>,
    rows: BTreeMap<&'a str, Vec<String>>,
}

fn layout(results: &[ScenarioResult]) -> Layout<'_> {
    let mut regions: Vec<&str> = Vec::new();
    let mut taus: Vec<i64> = Vec::new();
    let mut lambdas: Vec<f64> = Vec::new();
    for r in results {
        if !regions.contains(&r.region.as_str()) {
            regions.push(&r.region);
        }
        if !taus.contains(&r.tau) {
            taus.push(r.tau);
        }
        if !lambdas.contains(&r.lambda) {
            lambdas.push(r.lambda);
        }
    }
    taus.sort_unstable();
    lambdas.sort_by(f64::total_cmp);
    let columns: Vec<(i64, f64)> = taus
        .iter()
        .flat_map(|&t| lambdas.iter().map(move |&l| (t, l)))
        .collect();
    let mut cells = BTreeMap::new();
    let mut rows: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in results {
        let col = columns
            .iter()
            .position(|&(t, l)| t == r.tau && l == r.lambda)
            .expect("column collected above");
        let names = rows.entry(&r.region).or_default();
        for s in &r.stats {
            if !names.contains(&s.estimator) {
                names.push(s.estimator.clone());
            }
            cells.insert((r.region.as_str(), s.estimator.clone(), col), s);
        }
    }
    for names in rows.values_mut() {
        names.sort_by_key(|n| estimator_rank(n));
    }
    Layout {
        regions,
        columns,
        cells,
        rows,
    }
}

fn cell_text(s: Option<&&EstimatorStats>, kind: TableKind, full: bool) -> String {
    let fmt = |v: f64| if full { format!("{v}") } else { format!("{v:.3}") };
    match (s, kind) {
        (Some(s), TableKind::MeanSd) => match (s.mean, s.sd) {
            (Some(m), Some(sd)) => format!("{} ({})", fmt(m), fmt(sd)),
            _ => "NA".into(),
        },
        (Some(s), TableKind::Mse) => s.mse.map(fmt).unwrap_or_else(|| "NA".into()),
        (None, _) => "NA".into(),
    }
}

fn column_key(tau: i64, lambda: f64) -> String {
    format!("tau={tau};lambda={lambda}")
}

/// Renders one block per region with estimators as rows and `(τ, λ)` as
/// columns.
///
/// CSV cells carry full-precision numbers; markdown cells are rounded to
/// three decimals.
pub fn emit_table(results: &[ScenarioResult], kind: TableKind, format: TableFormat) -> String {
    let lay = layout(results);
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["region".to_string(), "estimator".to_string()];
            header.extend(lay.columns.iter().map(|&(t, l)| column_key(t, l)));
            w.write_record(&header).expect("in-memory write");
            for region in &lay.regions {
                for name in &lay.rows[region] {
                    let mut rec = vec![region.to_string(), name.clone()];
                    for c in 0..lay.columns.len() {
                        rec.push(cell_text(lay.cells.get(&(*region, name.clone(), c)), kind, true));
                    }
                    w.write_record(&rec).expect("in-memory write");
                }
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        }
        TableFormat::Markdown => {
            let title = match kind {
                TableKind::MeanSd => "Mean and sd (in parentheses) of the estimated delay",
                TableKind::Mse => "Mean squared error of the estimated delay",
            };
            let _ = writeln!(out, "{title}\n");
            for region in &lay.regions {
                let _ = writeln!(out, "### {region}\n");
                let mut head = String::from("| estimator |");
                let mut rule = String::from("|---|");
                for &(t, l) in &lay.columns {
                    let _ = write!(head, " τ={t}, λ={l} |");
                    rule.push_str("---|");
                }
                let _ = writeln!(out, "{head}\n{rule}");
                for name in &lay.rows[region] {
                    let _ = write!(out, "| {name} |");
                    for c in 0..lay.columns.len() {
                        let cell = cell_text(lay.cells.get(&(*region, name.clone(), c)), kind, false);
                        let _ = write!(out, " {cell} |");
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
    }
    out
}

/// One parsed cell of a CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub region: String,
    pub estimator: String,
    pub tau: i64,
    pub lambda: f64,
    /// `(mean, sd)` for mean/sd tables, `(mse, NaN)` for MSE tables;
    /// `None` for an `NA` cell.
    pub values: Option<(f64, f64)>,
}

/// Parses a table written by [`emit_table`] in CSV form.
pub fn parse_csv_table(text: &str, kind: TableKind) -> Result<Vec<TableCell>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::new();
    for h in headers.iter().skip(2) {
        let parse = || -> Option<(i64, f64)> {
            let (t, l) = h.strip_prefix("tau=")?.split_once(";lambda=")?;
            Some((t.parse().ok()?, l.parse().ok()?))
        };
        cols.push(parse().ok_or_else(|| Error::Parse(format!("bad column header '{h}'")))?);
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        for (c, &(tau, lambda)) in cols.iter().enumerate() {
            let text = rec
                .get(c + 2)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing cell")))?;
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad number '{s}'")))
            };
            let values = if text == "NA" {
                None
            } else {
                match kind {
                    TableKind::MeanSd => {
                        let (m, sd) = text
                            .split_once(" (")
                            .and_then(|(m, rest)| Some((m, rest.strip_suffix(')')?)))
                            .ok_or_else(|| Error::Parse(format!("line {line}: bad cell '{text}'")))?;
                        Some((num(m)?, num(sd)?))
                    }
                    TableKind::Mse => Some((num(text)?, f64::NAN)),
                }
            };
            out.push(TableCell {
                region: rec[0].to_string(),
                estimator: rec[1].to_string(),
                tau,
                lambda,
                values,
            });
        }
    }
    Ok(out)
}

/// Replicate-level outcomes as CSV: one row per replicate and estimator.
pub fn emit_raw(results: &[ScenarioResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "tau", "lambda", "estimator", "replicate", "lag", "error"])
        .expect("in-memory write");
    for r in results {
        for s in &r.stats {
            for (i, o) in s.raw.iter().flatten().enumerate() {
                let (lag, err) = match o {
                    Outcome::Lag(l) => (l.to_string(), String::new()),
                    Outcome::Failed(e) => (String::new(), e.to_string()),
                };
                w.write_record([
                    r.region.clone(),
                    r.tau.to_string(),
                    r.lambda.to_string(),
                    s.estimator.clone(),
                    i.to_string(),
                    lag,
                    err,
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Scenario grid read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub regions: Vec<String>,
    pub taus: Vec<i64>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub estimators: Option<Vec<String>>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub sigma_d: Option<f64>,
    /// Fixed grid fraction for every cell instead of the per-τ default.
    #[serde(default)]
    pub grid_fraction: Option<f64>,
    /// Region parameter file; names not found there fall back to presets.
    #[serde(default)]
    pub params_file: Option<PathBuf>,
    #[serde(default)]
    pub support_start: Option<i64>,
    #[serde(default)]
    pub support_end: Option<i64>,
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for (what, empty) in [
            ("regions", cfg.regions.is_empty()),
            ("taus", cfg.taus.is_empty()),
            ("lambdas", cfg.lambdas.is_empty()),
        ] {
            if empty {
                return Err(Error::Empty(what.into()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        if let (Some(p), Some(dir)) = (&cfg.params_file, path.parent()) {
            if p.is_relative() {
                cfg.params_file = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    /// The table-shaped grid: four regions, τ ∈ {37, 110, 183},
    /// λ ∈ {0.125, 0.5, 2.5}, all seven estimators.
    pub fn table_shaped() -> Self {
        BenchConfig {
            regions: RegionParams::presets().into_iter().map(|r| r.name).collect(),
            taus: vec![37, 110, 183],
            lambdas: vec![0.125, 0.5, 2.5],
            estimators: None,
            reps: None,
            seed: None,
            n: None,
            sigma_d: None,
            grid_fraction: None,
            params_file: None,
            support_start: None,
            support_end: None,
        }
    }

    fn region(&self, name: &str, file: Option<&RegionFile>) -> Result<RegionParams> {
        if let Some(f) = file {
            if let Ok(r) = f.get(Some(name)) {
                return Ok(r.clone());
            }
        }
        RegionParams::preset(name).ok_or_else(|| Error::InvalidParameter(format!("unknown region '{name}'")))
    }

    /// Expands to cells ordered region × τ × λ.
    pub fn cells(&self) -> Result<Vec<ScenarioConfig>> {
        let file = match &self.params_file {
            Some(p) => Some(RegionFile::load(p)?),
            None => None,
        };
        let estimators = match &self.estimators {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<_>>>()?,
            None => EstimatorSpec::all(),
        };
        let n = self.n.unwrap_or(366);
        let mut out = Vec::new();
        for name in &self.regions {
            let region = self.region(name, file.as_ref())?;
            for &tau in &self.taus {
                for &lambda in &self.lambdas {
                    let cfg = ScenarioConfig {
                        region: region.clone(),
                        tau,
                        lambda,
                        n,
                        reps: self.reps.unwrap_or(DEFAULT_REPS),
                        grid_fraction: self.grid_fraction.unwrap_or_else(|| default_grid_fraction(n, tau)),
                        estimators: estimators.clone(),
                        root_seed: self.seed.unwrap_or(0),
                        sigma_d: self.sigma_d.unwrap_or(DEFAULT_SIGMA_D),
                        support: (
                            self.support_start.unwrap_or(DEFAULT_SUPPORT.0),
                            self.support_end.unwrap_or(DEFAULT_SUPPORT.1),
                        ),
                        keep_raw: false,
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}
