//! Command-line front end: series files in, estimates, parameter files,
//! simulated series and benchmark tables out.
//!
//! Every file written by a command gets a sibling `<file>.manifest.json`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{emit_raw, emit_table, run_scenario, BenchConfig, TableFormat, TableKind};
use crate::error::{Error, Result};
use crate::signal::{standardize, Signal};
use crate::simulate::{
    fit_region_params, replicate_rng, simulate_pair_with, AmountModel, ImpulseSpec, RegionFile, RegionParams,
    DEFAULT_SIGMA_D,
};
use crate::tde::{aggregate_years, estimate_many, restrict_grid, EstimatorSpec, PathSettings, TdeResult};

pub const THREADS_ENV: &str = "TDE_THREADS";

#[derive(Parser, Debug, Serialize)]
#[command(name = "sparse-tde", version, about = "Time delay estimation between sparse and smooth series")]
pub struct Cli {
    /// Worker threads for batch commands.
    #[arg(long, env = THREADS_ENV, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Estimate the delay of every series (or id/year group) in a series file.
    Estimate(EstimateArgs),
    /// Median and robust sd of the significant yearly delays per id.
    Aggregate(AggregateArgs),
    /// Fit a wet/dry chain and monthly amount rates from daily precipitation.
    FitParams(FitParamsArgs),
    /// Simulate impulse pairs as a series file.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo scenario grid and emit the mean/sd and MSE tables.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct Columns {
    #[arg(long, default_value = "day")]
    pub day_col: String,
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long)]
    pub id_col: Option<String>,
    /// Split each id further by this column (one estimate per id and year).
    #[arg(long)]
    pub year_col: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub columns: Columns,
    /// Estimator names; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', default_value = "pn")]
    pub estimator: Vec<String>,
    #[arg(long, default_value_t = 0.4)]
    pub grid_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AggregateArgs {
    /// Output of `estimate`.
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitParamsArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "day")]
    pub day_col: String,
    /// Precipitation column.
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long)]
    pub year_col: Option<String>,
    /// Name given to the fitted region.
    #[arg(long, default_value = "fitted")]
    pub region: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Amounts {
    /// One exponential mean `--lambda` for every day.
    Scenario,
    /// The region's monthly rates.
    Monthly,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Region parameter file; presets are used when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "madrense")]
    pub region: String,
    #[arg(long, default_value_t = 37)]
    pub tau: i64,
    #[arg(long, default_value_t = 0.125)]
    pub lambda: f64,
    #[arg(long, default_value_t = 366)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 110)]
    pub support_start: i64,
    #[arg(long, default_value_t = 183)]
    pub support_end: i64,
    #[arg(long, default_value_t = DEFAULT_SIGMA_D)]
    pub sigma_d: f64,
    #[arg(long, value_enum, default_value_t = Amounts::Scenario)]
    pub amounts: Amounts,
    /// Number of ids; more than one (or more than one year) adds id and year columns.
    #[arg(long, default_value_t = 1)]
    pub pixels: usize,
    #[arg(long, default_value_t = 1)]
    pub years: usize,
    #[arg(long, default_value_t = 1)]
    pub first_year: i64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Markdown,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Scenario grid (TOML); the full table-shaped grid when absent.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Replace the config's regions.
    #[arg(long, value_delimiter = ',')]
    pub region: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tau: Vec<i64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub estimator: Vec<String>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also emit every replicate's lag.
    #[arg(long)]
    pub raw: bool,
    /// Output prefix: writes `<out>.meansd.<ext>`, `<out>.mse.<ext>` and
    /// `<out>.raw.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance record written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub output: String,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Session<'a> {
    cli: &'a Cli,
    started: f64,
    seeds: Vec<u64>,
}

impl Session<'_> {
    fn command_name(&self) -> &'static str {
        match self.cli.command {
            Command::Estimate(_) => "estimate",
            Command::Aggregate(_) => "aggregate",
            Command::FitParams(_) => "fit-params",
            Command::Simulate(_) => "simulate",
            Command::Bench(_) => "bench",
        }
    }

    /// Writes `text` to `path` (with its manifest) or to `stdout`.
    fn emit(&self, path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
        let Some(path) = path else {
            stdout.write_all(text.as_bytes())?;
            return Ok(());
        };
        std::fs::write(path, text)?;
        let manifest = RunManifest {
            command: self.command_name().into(),
            parameters: serde_json::to_value(self.cli).unwrap_or(serde_json::Value::Null),
            seeds: self.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: self.started,
            finished_unix: unix_now(),
            output: path.display().to_string(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(manifest_path(path), json + "\n")?;
        Ok(())
    }
}

/// One group of rows from a series file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesGroup {
    pub id: String,
    pub year: Option<i64>,
    /// Line of the group's first row.
    pub line: u64,
    pub days: Vec<i64>,
    /// One vector per requested value column.
    pub values: Vec<Vec<f64>>,
}

/// Reads a headed CSV series file (`#` starts a comment line) into groups
/// keyed by id and year, in order of first appearance.
///
/// Days must increase strictly within a group and no requested cell may be
/// empty. Every offending line is reported.
pub fn read_series(
    text: &str,
    day_col: &str,
    value_cols: &[&str],
    id_col: Option<&str>,
    year_col: Option<&str>,
) -> Result<Vec<SeriesGroup>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}' (header: {})", headers.iter().collect::<Vec<_>>().join(","))))
    };
    let day_i = find(day_col)?;
    let value_i = value_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let id_i = id_col.map(find).transpose()?;
    let year_i = year_col.map(find).transpose()?;

    let mut groups: Vec<SeriesGroup> = Vec::new();
    let mut index: HashMap<(String, Option<i64>), usize> = HashMap::new();
    let mut problems = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut bad = false;
        let mut cell = |i: usize, name: &str| -> Option<&str> {
            match rec.get(i) {
                Some(s) if !s.is_empty() => Some(s),
                _ => {
                    problems.push(format!("line {line}: column '{name}' is empty"));
                    bad = true;
                    None
                }
            }
        };
        let day = cell(day_i, day_col).map(str::to_owned);
        let values: Vec<Option<String>> = value_i
            .iter()
            .zip(value_cols)
            .map(|(&i, name)| cell(i, name).map(str::to_owned))
            .collect();
        let id = match id_i {
            Some(i) => cell(i, id_col.unwrap_or_default()).map(str::to_owned),
            None => Some("series".to_owned()),
        };
        let year = year_i.map(|i| cell(i, year_col.unwrap_or_default()).map(str::to_owned));
        if bad {
            continue;
        }
        let mut parse_int = |s: &str, name: &str| -> Option<i64> {
            s.parse::<i64>()
                .map_err(|_| problems.push(format!("line {line}: column '{name}': '{s}' is not an integer")))
                .ok()
        };
        let day = parse_int(day.as_deref().unwrap_or_default(), day_col);
        let year = match year {
            Some(y) => parse_int(y.as_deref().unwrap_or_default(), year_col.unwrap_or_default()).map(Some),
            None => Some(None),
        };
        let mut parsed = Vec::with_capacity(values.len());
        for (v, name) in values.iter().zip(value_cols) {
            let s = v.as_deref().unwrap_or_default();
            match s.parse::<f64>() {
                Ok(f) if f.is_finite() => parsed.push(f),
                _ => problems.push(format!("line {line}: column '{name}': '{s}' is not a finite number")),
            }
        }
        let (Some(day), Some(year)) = (day, year) else { continue };
        if parsed.len() != values.len() {
            continue;
        }
        let key = (id.unwrap_or_default(), year);
        let gi = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(SeriesGroup {
                id: key.0.clone(),
                year: key.1,
                line,
                days: Vec::new(),
                values: vec![Vec::new(); value_cols.len()],
            });
            groups.len() - 1
        });
        let g = &mut groups[gi];
        if let Some(&last) = g.days.last() {
            if day <= last {
                problems.push(format!("line {line}: day {day} does not increase (previous {last})"));
                continue;
            }
        }
        g.days.push(day);
        for (col, v) in g.values.iter_mut().zip(parsed) {
            col.push(v);
        }
    }
    if !problems.is_empty() {
        return Err(Error::Parse(problems.join("; ")));
    }
    if groups.is_empty() {
        return Err(Error::Empty("series file has no data rows".into()));
    }
    Ok(groups)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Standardizes both series and runs `specs` on them.
pub fn estimate_group(x: &[f64], y: &[f64], grid_fraction: f64, specs: &[EstimatorSpec]) -> Vec<Result<TdeResult>> {
    let prepared = Signal::new(x.to_vec())
        .and_then(|x| standardize(&x))
        .and_then(|xs| Ok((xs, standardize(&Signal::new(y.to_vec())?)?)))
        .and_then(|(xs, ys)| Ok((restrict_grid(xs.len(), grid_fraction)?, xs, ys)));
    match prepared {
        Ok((grid, xs, ys)) => estimate_many(&xs, &ys, &grid, specs, PathSettings::default()),
        Err(e) => specs.iter().map(|_| Err(e.clone())).collect(),
    }
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    let name = dbg.split(['(', ' ', '{']).next().unwrap_or_default().to_owned();
    format!("{name}: {e}").replace([',', '\n'], ";")
}

pub const ESTIMATE_HEADER: &str = "id,year,estimator,status,lag_hat,gamma,p_value,overlap,significant,lambda,reason";

fn cmd_estimate(args: &EstimateArgs, session: &Session, stdout: &mut dyn Write) -> Result<()> {
    let specs = args
        .estimator
        .iter()
        .map(|n| n.parse::<EstimatorSpec>())
        .collect::<Result<Vec<_>>>()?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", args.alpha)));
    }
    let c = &args.columns;
    let groups = read_series(
        &read_text(&args.input)?,
        &c.day_col,
        &[&c.x_col, &c.y_col],
        c.id_col.as_deref(),
        c.year_col.as_deref(),
    )?;
    let results: Vec<Vec<Result<TdeResult>>> = groups
        .par_iter()
        .map(|g| estimate_group(&g.values[0], &g.values[1], args.grid_fraction, &specs))
        .collect();
    let mut out = String::from(ESTIMATE_HEADER);
    out.push('\n');
    for (g, rs) in groups.iter().zip(results) {
        let year = g.year.map(|y| y.to_string()).unwrap_or_default();
        for (spec, r) in specs.iter().zip(rs) {
            match r {
                Ok(r) => {
                    let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{year},{spec},ok,{},{},{:e},{},{},{lambda},",
                        g.id,
                        r.lag_hat,
                        r.gamma_at_lag,
                        r.p_value,
                        r.overlap_length,
                        r.p_value < args.alpha
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{},{year},{spec},failed,,,,,,,{}", g.id, error_kind(&e));
                }
            }
        }
    }
    session.emit(args.out.as_deref(), &out, stdout)
}

/// A parsed row of `estimate` output.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub id: String,
    pub year: Option<i64>,
    pub estimator: String,
    pub result: Option<TdeResult>,
}

pub fn parse_estimates(text: &str) -> Result<Vec<EstimateRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))
    };
    let [id, year, est, status, lag, gamma, p, overlap, lambda] =
        ["id", "year", "estimator", "status", "lag_hat", "gamma", "p_value", "overlap", "lambda"].map(col);
    let (id, year, est, status, lag, gamma, p, overlap, lambda) =
        (id?, year?, est?, status?, lag?, gamma?, p?, overlap?, lambda?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse(format!("line {line}: bad {what}"));
        let get = |i: usize| rec.get(i).unwrap_or_default();
        let estimator = get(est).to_owned();
        let spec: EstimatorSpec = estimator.parse().map_err(|_| bad("estimator"))?;
        let year = match get(year) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("year"))?),
        };
        let result = match get(status) {
            "ok" => Some(TdeResult {
                lag_hat: get(lag).parse().map_err(|_| bad("lag_hat"))?,
                gamma_at_lag: get(gamma).parse().map_err(|_| bad("gamma"))?,
                p_value: get(p).parse().map_err(|_| bad("p_value"))?,
                overlap_length: get(overlap).parse().map_err(|_| bad("overlap"))?,
                spec,
                lambda: match get(lambda) {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("lambda"))?),
                },
            }),
            "failed" => None,
            _ => return Err(bad("status")),
        };
        rows.push(EstimateRow {
            id: get(id).to_owned(),
            year,
            estimator,
            result,
        });
    }
    Ok(rows)
}

pub const AGGREGATE_HEADER: &str =
    "id,estimator,years,failed,significant_years,significant_fraction,median_lag,robust_sd,significant";

fn cmd_aggregate(args: &AggregateArgs, session: &Session, stdout: &mut dyn Write) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", args.alpha)));
    }
    let rows = parse_estimates(&read_text(&args.input)?)?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), (Vec<TdeResult>, usize)> = HashMap::new();
    for r in rows {
        let key = (r.id, r.estimator);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match r.result {
            Some(t) => entry.0.push(t),
            None => entry.1 += 1,
        }
    }
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
    for key in &order {
        let (results, failed) = &groups[key];
        let s = aggregate_years(results, args.alpha);
        let survivors = results.iter().filter(|r| r.p_value < args.alpha).count();
        let _ = writeln!(
            out,
            "{},{},{},{failed},{survivors},{},{},{},{}",
            key.0,
            key.1,
            results.len(),
            s.significant_fraction,
            opt(s.median_lag),
            opt(s.robust_sd),
            s.significant
        );
    }
    session.emit(args.out.as_deref(), &out, stdout)
}

fn cmd_fit_params(args: &FitParamsArgs, session: &Session, stdout: &mut dyn Write) -> Result<()> {
    let groups = read_series(
        &read_text(&args.input)?,
        &args.day_col,
        &[&args.x_col],
        args.id_col.as_deref(),
        args.year_col.as_deref(),
    )?;
    let params = fit_group_params(&args.region, &groups)?;
    let file = RegionFile { region: vec![params] };
    session.emit(args.out.as_deref(), &file.to_toml(), stdout)
}

/// Fits one region from every group, pooling transitions within groups only.
///
/// Each group's days are moved by whole 366-day years so that no two groups
/// touch, which keeps cross-group pairs out of the transition counts while
/// months still follow the day of year.
fn fit_group_params(name: &str, groups: &[SeriesGroup]) -> Result<RegionParams> {
    let mut days: Vec<i64> = Vec::new();
    let mut precip = Vec::new();
    for g in groups {
        let mut shift = 0;
        if let Some(&last) = days.last() {
            let need = last + 2 - g.days[0];
            shift = need.div_euclid(366) * 366;
            if g.days[0] + shift < last + 2 {
                shift += 366;
            }
        }
        days.extend(g.days.iter().map(|d| d + shift));
        precip.extend(&g.values[0]);
    }
    fit_region_params(name, &days, &precip)
}

fn region_for(params: Option<&Path>, name: &str) -> Result<RegionParams> {
    match params {
        Some(p) => Ok(RegionFile::load(p)?.get(Some(name))?.clone()),
        None => RegionParams::preset(name).ok_or_else(|| {
            let known: Vec<String> = RegionParams::presets().into_iter().map(|r| r.name).collect();
            Error::InvalidParameter(format!("unknown region '{name}' (presets: {})", known.join(", ")))
        }),
    }
}

/// Renders simulated pairs as a series file.
pub fn simulate_series(args: &SimulateArgs) -> Result<String> {
    let region = region_for(args.params.as_deref(), &args.region)?;
    let tm = region.transitions()?;
    let amounts = match args.amounts {
        Amounts::Scenario => AmountModel::Scenario { mean: args.lambda },
        Amounts::Monthly => region.monthly_amounts(),
    };
    let spec = ImpulseSpec {
        n: args.n,
        support_start: args.support_start,
        support_end: args.support_end,
        tau: args.tau,
        sigma_d: args.sigma_d,
    };
    spec.validate()?;
    if args.pixels == 0 || args.years == 0 {
        return Err(Error::InvalidParameter("pixels and years must be at least 1".into()));
    }
    let batch = args.pixels > 1 || args.years > 1;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# seed={} tau={} lambda={} region={} n={} support={}..{} sigma_d={} amounts={}",
        args.seed,
        args.tau,
        args.lambda,
        region.name,
        args.n,
        args.support_start,
        args.support_end,
        args.sigma_d,
        match args.amounts {
            Amounts::Scenario => "scenario",
            Amounts::Monthly => "monthly",
        }
    );
    out.push_str(if batch { "id,year,day,x,y\n" } else { "day,x,y\n" });
    for p in 0..args.pixels {
        for yi in 0..args.years {
            let stream = (p * args.years + yi) as u64;
            let mut rng = replicate_rng(args.seed, stream);
            let pair = simulate_pair_with(&spec, &tm, &amounts, &mut rng)?;
            let prefix = if batch {
                format!("px{},{},", p + 1, args.first_year + yi as i64)
            } else {
                String::new()
            };
            for (t, (x, y)) in pair.x.iter().zip(pair.y.iter()).enumerate() {
                let _ = writeln!(out, "{prefix}{},{x},{y}", t + 1);
            }
        }
    }
    Ok(out)
}

fn cmd_simulate(args: &SimulateArgs, session: &Session, stdout: &mut dyn Write) -> Result<()> {
    let text = simulate_series(args)?;
    session.emit(args.out.as_deref(), &text, stdout)
}

fn bench_config(args: &BenchArgs) -> Result<BenchConfig> {
    let mut cfg = match &args.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::table_shaped(),
    };
    if !args.region.is_empty() {
        cfg.regions = args.region.clone();
    }
    if !args.tau.is_empty() {
        cfg.taus = args.tau.clone();
    }
    if !args.lambda.is_empty() {
        cfg.lambdas = args.lambda.clone();
    }
    if !args.estimator.is_empty() {
        cfg.estimators = Some(args.estimator.clone());
    }
    cfg.reps = args.reps.or(cfg.reps);
    cfg.seed = args.seed.or(cfg.seed);
    cfg.n = args.n.or(cfg.n);
    if args.params.is_some() {
        cfg.params_file = args.params.clone();
    }
    Ok(cfg)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_bench(args: &BenchArgs, session: &mut Session, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let cfg = bench_config(args)?;
    let mut cells = cfg.cells()?;
    session.seeds = vec![cfg.seed.unwrap_or(0)];
    let total = cells.len();
    let mut results = Vec::with_capacity(total);
    for (i, cell) in cells.iter_mut().enumerate() {
        cell.keep_raw = args.raw;
        let t = Instant::now();
        let r = run_scenario(cell)?;
        let failed: usize = r.stats.iter().map(|s| s.failure_count).sum();
        let _ = writeln!(
            stderr,
            "[{}/{total}] {} tau={} lambda={} reps={} failures={failed} ({:.1}s)",
            i + 1,
            cell.region.name,
            cell.tau,
            cell.lambda,
            cell.reps,
            t.elapsed().as_secs_f64()
        );
        results.push(r);
    }
    let format = TableFormat::from(args.format);
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Markdown => "md",
    };
    let meansd = emit_table(&results, TableKind::MeanSd, format);
    let mse = emit_table(&results, TableKind::Mse, format);
    match &args.out {
        Some(prefix) => {
            session.emit(Some(&with_suffix(prefix, &format!(".meansd.{ext}"))), &meansd, stdout)?;
            session.emit(Some(&with_suffix(prefix, &format!(".mse.{ext}"))), &mse, stdout)?;
            if args.raw {
                session.emit(Some(&with_suffix(prefix, ".raw.csv")), &emit_raw(&results), stdout)?;
            }
        }
        None => {
            let mut text = format!("{meansd}\n{mse}");
            if args.raw {
                text.push('\n');
                text.push_str(&emit_raw(&results));
            }
            session.emit(None, &text, stdout)?;
        }
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParameter(format!("{THREADS_ENV} must be at least 1")));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut session = Session {
        cli,
        started: unix_now(),
        seeds: Vec::new(),
    };
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, &session, stdout),
        Command::Aggregate(a) => cmd_aggregate(a, &session, stdout),
        Command::FitParams(a) => cmd_fit_params(a, &session, stdout),
        Command::Simulate(a) => {
            session.seeds = vec![a.seed];
            cmd_simulate(a, &session, stdout)
        }
        Command::Bench(a) => cmd_bench(a, &mut session, stdout, stderr),
    }
}

/// Exit status 0 on success, 1 on a hard error, 2 on a usage error.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    match run(&cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
