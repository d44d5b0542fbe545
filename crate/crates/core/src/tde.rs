//! Time delay estimators: the lag maximizing the squared association,
//! either against the raw reference or against its sparse reconstruction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assoc::{association_profile, overlap, AssociationProfile, LagGrid, ScalingMode, ShiftMatrix};
use crate::error::{Error, Result};
use crate::lasso::{self, Folds, LambdaSelection, SolutionPath};
use crate::signal::{moments, standardize, Signal};
use crate::simulate::median_sorted;

/// Consistency constant turning a median absolute deviation into an sd.
pub const MAD_SCALE: f64 = 1.4826;

/// Folds used by the named cross-validated estimators.
pub const DEFAULT_CV_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Pearson,
    Lasso,
}

/// Which estimator to run.
///
/// For the Lasso family `scaling` is ignored; the post-fit association is
/// `Standard` when `cor_after` is set and `Unscaled` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub family: Family,
    pub scaling: ScalingMode,
    pub lambda_rule: Option<LambdaSelection>,
    pub cor_after: bool,
}

impl EstimatorSpec {
    pub fn pearson(scaling: ScalingMode) -> Self {
        EstimatorSpec {
            family: Family::Pearson,
            scaling,
            lambda_rule: None,
            cor_after: false,
        }
    }

    pub fn lasso(rule: LambdaSelection, cor_after: bool) -> Self {
        EstimatorSpec {
            family: Family::Lasso,
            scaling: ScalingMode::Unscaled,
            lambda_rule: Some(rule),
            cor_after,
        }
    }

    pub fn pn() -> Self {
        Self::pearson(ScalingMode::Unscaled)
    }

    pub fn pn_trim() -> Self {
        Self::pearson(ScalingMode::Trimmed)
    }

    pub fn pn_standard() -> Self {
        Self::pearson(ScalingMode::Standard)
    }

    pub fn lasso_quantile(cor_after: bool) -> Self {
        Self::lasso(LambdaSelection::QuantileOfPath(0.1), cor_after)
    }

    pub fn lasso_cv(cor_after: bool) -> Self {
        Self::lasso(LambdaSelection::CrossValidation(Folds::K(DEFAULT_CV_FOLDS)), cor_after)
    }

    /// The seven named estimators in table order.
    pub fn all() -> Vec<EstimatorSpec> {
        NAMES.iter().map(|n| n.parse().expect("known name")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, &self.lambda_rule) {
            (Family::Pearson, Some(_)) => Err(Error::InvalidParameter(
                "Pearson estimators take no lambda rule".into(),
            )),
            (Family::Lasso, None) => Err(Error::InvalidParameter(
                "Lasso estimators need a lambda rule".into(),
            )),
            (Family::Lasso, Some(rule)) => rule.validate(),
            (Family::Pearson, None) => Ok(()),
        }
    }

    /// Association scaling applied when scanning lags.
    pub fn post_scaling(&self) -> ScalingMode {
        match self.family {
            Family::Pearson => self.scaling,
            Family::Lasso if self.cor_after => ScalingMode::Standard,
            Family::Lasso => ScalingMode::Unscaled,
        }
    }

    /// Stable command-line name, or `None` for custom specs.
    pub fn name(&self) -> Option<&'static str> {
        NAMES
            .iter()
            .copied()
            .find(|n| n.parse::<EstimatorSpec>().ok().as_ref() == Some(self))
    }
}

pub const NAMES: [&str; 7] = [
    "pn",
    "pn-trim",
    "pn-standard",
    "lasso-0.1",
    "lasso-cor-0.1",
    "lasso-cv",
    "lasso-cv-cor",
];

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "pn" => Self::pn(),
            "pn-trim" => Self::pn_trim(),
            "pn-standard" => Self::pn_standard(),
            "lasso-0.1" => Self::lasso_quantile(false),
            "lasso-cor-0.1" => Self::lasso_quantile(true),
            "lasso-cv" => Self::lasso_cv(false),
            "lasso-cv-cor" => Self::lasso_cv(true),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown estimator '{other}' (expected one of {})",
                    NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => match (self.family, self.lambda_rule) {
                (Family::Pearson, _) => write!(f, "pearson[{}]", self.scaling),
                (Family::Lasso, Some(LambdaSelection::QuantileOfPath(q))) => {
                    write!(f, "lasso[q={q}{}]", if self.cor_after { ",cor" } else { "" })
                }
                (Family::Lasso, Some(LambdaSelection::CrossValidation(k))) => {
                    let folds = match k {
                        Folds::K(k) => k.to_string(),
                        Folds::LeaveOneOut => "loo".into(),
                    };
                    write!(f, "lasso[cv={folds}{}]", if self.cor_after { ",cor" } else { "" })
                }
                (Family::Lasso, None) => f.write_str("lasso[?]"),
            },
        }
    }
}

/// Path resolution used by the Lasso estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSettings {
    pub length: usize,
    pub lambda_min_ratio: f64,
}

impl Default for PathSettings {
    fn default() -> Self {
        PathSettings {
            length: 100,
            lambda_min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdeResult {
    pub lag_hat: i64,
    pub gamma_at_lag: f64,
    pub p_value: f64,
    pub overlap_length: usize,
    pub spec: EstimatorSpec,
    /// Penalty used by Lasso estimators.
    pub lambda: Option<f64>,
}

/// Symmetric grid covering `fraction` of the full lag range.
///
/// The half-width is `fraction·(2n−1)/2` rounded to the nearest integer.
pub fn restrict_grid(n: usize, fraction: f64) -> Result<LagGrid> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::DegenerateGrid(format!("fraction {fraction} outside (0, 1]")));
    }
    if n < 2 {
        return Err(Error::DegenerateGrid(format!("series length {n}")));
    }
    let full = (2 * n - 1) as f64;
    if fraction * full < 1.0 {
        return Err(Error::DegenerateGrid(format!(
            "fraction {fraction} of {full} lags is less than one lag"
        )));
    }
    if fraction == 1.0 {
        return LagGrid::full(n);
    }
    let half = ((fraction * full / 2.0).round() as usize).min(n - 1);
    LagGrid::symmetric(n, half)
}

/// Index of the maximal `γ²`; ties go to the smallest `|l|`, then to the
/// negative lag.
pub fn argmax_lag(profile: &AssociationProfile) -> Option<(i64, f64)> {
    let mut best: Option<(i64, f64)> = None;
    for (lag, g) in profile.iter() {
        best = match best {
            None => Some((lag, g)),
            Some((bl, bg)) => {
                let (g2, b2) = (g * g, bg * bg);
                let closer = (lag.abs(), lag.signum()) < (bl.abs(), bl.signum());
                if g2 > b2 || (g2 == b2 && closer) {
                    Some((lag, g))
                } else {
                    Some((bl, bg))
                }
            }
        };
    }
    best
}

/// Two-sided p-value of the no-correlation t test on `m` paired samples.
pub fn no_correlation_pvalue(gamma: f64, overlap_length: usize) -> Result<f64> {
    if overlap_length < 3 {
        return Err(Error::InsufficientOverlap(overlap_length));
    }
    if gamma.is_nan() {
        return Err(Error::InvalidParameter("correlation is NaN".into()));
    }
    let r = gamma.clamp(-1.0, 1.0);
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (overlap_length - 2) as f64;
    // With t² = r²·df/(1−r²), df/(df+t²) reduces to 1 − r².
    let p = statrs::function::beta::beta_reg(df / 2.0, 0.5, 1.0 - r * r);
    Ok(p.clamp(0.0, 1.0))
}

/// Pearson r and p-value of `x` against `y` on the overlap at `lag`.
fn significance(x: &[f64], y: &[f64], lag: i64) -> Result<(f64, usize)> {
    let (xs, ys) = overlap(x, y, lag);
    let m = xs.len();
    let r = match (moments(xs), moments(ys)) {
        (Ok((mx, sx)), Ok((my, sy))) => {
            xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (m as f64 * sx * sy)
        }
        // A constant window carries no evidence against the null.
        _ => return Ok((1.0, m)),
    };
    Ok((no_correlation_pvalue(r, m)?, m))
}

fn finish(
    x: &[f64],
    y: &[f64],
    profile: &AssociationProfile,
    spec: EstimatorSpec,
    lambda: Option<f64>,
) -> Result<TdeResult> {
    let (lag_hat, gamma_at_lag) =
        argmax_lag(profile).ok_or_else(|| Error::DegenerateGrid("empty grid".into()))?;
    let (p_value, overlap_length) = significance(x, y, lag_hat)?;
    Ok(TdeResult {
        lag_hat,
        gamma_at_lag,
        p_value,
        overlap_length,
        spec,
        lambda,
    })
}

/// Runs one estimator on a pair of series.
///
/// Lasso estimators standardize both series before fitting.
pub fn estimate_delay(x: &Signal, y: &Signal, grid: &LagGrid, spec: EstimatorSpec) -> Result<TdeResult> {
    estimate_many(x, y, grid, &[spec], PathSettings::default())
        .pop()
        .expect("one result per spec")
}

/// Runs several estimators on the same pair, sharing the Lasso path and
/// cross-validation between them.
pub fn estimate_many(
    x: &Signal,
    y: &Signal,
    grid: &LagGrid,
    specs: &[EstimatorSpec],
    settings: PathSettings,
) -> Vec<Result<TdeResult>> {
    if x.len() != y.len() {
        return specs.iter().map(|_| Err(Error::LengthMismatch(x.len(), y.len()))).collect();
    }
    if grid.n() != x.len() {
        return specs
            .iter()
            .map(|_| Err(Error::LengthMismatch(grid.n(), x.len())))
            .collect();
    }
    let mut lasso_ctx: Option<Result<LassoContext>> = None;
    let mut results = Vec::with_capacity(specs.len());
    for &spec in specs {
        let r = spec.validate().and_then(|_| match spec.family {
            Family::Pearson => {
                let profile = association_profile(x, y, grid, spec.scaling)?;
                finish(x, y, &profile, spec, None)
            }
            Family::Lasso => {
                let ctx = lasso_ctx.get_or_insert_with(|| LassoContext::new(x, y, settings));
                match ctx {
                    Ok(ctx) => ctx.estimate(grid, spec),
                    Err(e) => Err(e.clone()),
                }
            }
        });
        results.push(r);
    }
    results
}

struct LassoContext {
    xs: Signal,
    ys: Signal,
    design: ShiftMatrix,
    path: SolutionPath,
    cv: Vec<(Folds, Vec<f64>)>,
}

impl LassoContext {
    fn new(x: &Signal, y: &Signal, settings: PathSettings) -> Result<Self> {
        let xs = standardize(x)?;
        let ys = standardize(y)?;
        let design = ShiftMatrix::new(&ys);
        let path = lasso::solution_path(&design, &xs, settings.length, settings.lambda_min_ratio)?;
        Ok(LassoContext {
            xs,
            ys,
            design,
            path,
            cv: Vec::new(),
        })
    }

    fn select(&mut self, rule: LambdaSelection) -> Result<usize> {
        let lambda = match rule {
            LambdaSelection::CrossValidation(folds) => {
                let errors = match self.cv.iter().find(|(f, _)| *f == folds) {
                    Some((_, e)) => e.clone(),
                    None => {
                        let e = lasso::cross_validation_errors(&self.path, folds, &self.design, &self.xs)?;
                        self.cv.push((folds, e.clone()));
                        e
                    }
                };
                let mut best = 0;
                for (i, &e) in errors.iter().enumerate().skip(1) {
                    if e < errors[best] {
                        best = i;
                    }
                }
                return Ok(best);
            }
            _ => lasso::select_lambda(&self.path, rule, &self.design, &self.xs)?,
        };
        self.path
            .entries
            .iter()
            .position(|e| e.lambda == lambda)
            .ok_or(Error::EmptyPath)
    }

    fn estimate(&mut self, grid: &LagGrid, spec: EstimatorSpec) -> Result<TdeResult> {
        let rule = spec.lambda_rule.expect("validated");
        let idx = self.select(rule)?;
        let fit = &self.path.entries[idx];
        if fit.nonzero_count == 0 {
            return Err(Error::AllZeroReconstruction);
        }
        let recon = lasso::sparse_reconstruct(&self.design, fit)?;
        if recon.is_zero() {
            return Err(Error::AllZeroReconstruction);
        }
        let profile = association_profile(&recon, &self.ys, grid, spec.post_scaling())?;
        finish(&self.xs, &self.ys, &profile, spec, Some(fit.lambda))
    }
}

/// Significant-year summary for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualSummary {
    pub results: Vec<TdeResult>,
    pub median_lag: Option<f64>,
    pub robust_sd: Option<f64>,
    pub significant_fraction: f64,
    pub significant: bool,
}

/// Median and scaled MAD of the lags with `p < alpha`.
pub fn aggregate_years(results: &[TdeResult], alpha: f64) -> AnnualSummary {
    let mut lags: Vec<f64> = results
        .iter()
        .filter(|r| r.p_value < alpha)
        .map(|r| r.lag_hat as f64)
        .collect();
    let fraction = if results.is_empty() {
        0.0
    } else {
        lags.len() as f64 / results.len() as f64
    };
    if lags.is_empty() {
        return AnnualSummary {
            results: results.to_vec(),
            median_lag: None,
            robust_sd: None,
            significant_fraction: fraction,
            significant: false,
        };
    }
    lags.sort_by(f64::total_cmp);
    let median = median_sorted(&lags);
    let mut dev: Vec<f64> = lags.iter().map(|l| (l - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    AnnualSummary {
        results: results.to_vec(),
        median_lag: Some(median),
        robust_sd: Some(MAD_SCALE * median_sorted(&dev)),
        significant_fraction: fraction,
        significant: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: Vec<f64>) -> Signal {
        Signal::new(v).unwrap()
    }

    fn result(lag: i64, p: f64) -> TdeResult {
        TdeResult {
            lag_hat: lag,
            gamma_at_lag: 0.5,
            p_value: p,
            overlap_length: 100,
            spec: EstimatorSpec::pn(),
            lambda: None,
        }
    }

    #[test]
    fn names_round_trip() {
        for name in NAMES {
            let spec: EstimatorSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
            spec.validate().unwrap();
        }
        assert!("pn-bogus".parse::<EstimatorSpec>().is_err());
        assert_eq!(EstimatorSpec::all().len(), 7);
    }

    #[test]
    fn pearson_with_rule_is_invalid() {
        let mut s = EstimatorSpec::pn();
        s.lambda_rule = Some(LambdaSelection::QuantileOfPath(0.1));
        assert!(s.validate().is_err());
        let mut s = EstimatorSpec::lasso_cv(false);
        s.lambda_rule = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn grid_half_widths() {
        assert_eq!(restrict_grid(366, 0.25).unwrap().lags()[0], -91);
        assert_eq!(restrict_grid(366, 0.4).unwrap().lags()[0], -146);
        assert_eq!(restrict_grid(366, 0.5).unwrap().lags()[0], -183);
        assert_eq!(restrict_grid(366, 1.0).unwrap().len(), 731);
        assert!(matches!(restrict_grid(366, 0.0), Err(Error::DegenerateGrid(_))));
        assert!(matches!(restrict_grid(366, 1.5), Err(Error::DegenerateGrid(_))));
        assert!(matches!(restrict_grid(3, 0.1), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn spike_pair_full_grid() {
        let mut x = vec![0.0; 300];
        let mut y = vec![0.0; 300];
        x[100] = 1.0;
        y[150] = 1.0;
        let grid = LagGrid::full(300).unwrap();
        let r = estimate_delay(&sig(x), &sig(y), &grid, EstimatorSpec::pn()).unwrap();
        assert_eq!(r.lag_hat, 50);
    }

    #[test]
    fn self_pair_gives_zero_lag() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..80).map(|_| rng.random::<f64>()).collect();
        let x = standardize(&sig(raw)).unwrap().into_inner();
        let grid = restrict_grid(80, 0.5).unwrap();
        for spec in [EstimatorSpec::pn(), EstimatorSpec::pn_trim(), EstimatorSpec::pn_standard()] {
            let r = estimate_delay(&sig(x.clone()), &sig(x.clone()), &grid, spec).unwrap();
            assert_eq!(r.lag_hat, 0);
            assert!(r.p_value < 1e-10);
        }
    }

    #[test]
    fn ties_prefer_small_then_negative() {
        let grid = LagGrid::new(5, vec![-2, -1, 0, 1, 2]).unwrap();
        let p = AssociationProfile {
            grid: grid.clone(),
            gamma: vec![0.5, -0.5, 0.1, 0.5, 0.2],
            scaling: ScalingMode::Unscaled,
        };
        assert_eq!(argmax_lag(&p).unwrap().0, -1);
        let p = AssociationProfile {
            grid,
            gamma: vec![0.5, 0.0, 0.1, 0.0, -0.5],
            scaling: ScalingMode::Unscaled,
        };
        assert_eq!(argmax_lag(&p).unwrap().0, -2);
    }

    #[test]
    fn pvalue_edges() {
        assert_eq!(no_correlation_pvalue(0.0, 100).unwrap(), 1.0);
        assert_eq!(no_correlation_pvalue(1.0, 10).unwrap(), 0.0);
        assert_eq!(no_correlation_pvalue(-1.3, 10).unwrap(), 0.0);
        assert_eq!(no_correlation_pvalue(0.3, 2), Err(Error::InsufficientOverlap(2)));
        let p = no_correlation_pvalue(0.5, 30).unwrap();
        assert!((p - 0.00487).abs() < 5e-5, "{p}");
        assert_eq!(p, no_correlation_pvalue(-0.5, 30).unwrap());
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_years(&[result(28, 0.01), result(28, 0.01), result(28, 0.01)], 0.05);
        assert_eq!(s.median_lag, Some(28.0));
        assert_eq!(s.robust_sd, Some(0.0));
        assert_eq!(s.significant_fraction, 1.0);

        let rs: Vec<_> = [10, 20, 30, 40, 50].iter().map(|&l| result(l, 0.0)).collect();
        let s = aggregate_years(&rs, 0.05);
        assert_eq!(s.median_lag, Some(30.0));
        assert!((s.robust_sd.unwrap() - 14.826).abs() < 1e-12);

        let s = aggregate_years(&[result(5, 0.2), result(9, 0.5)], 0.05);
        assert!(!s.significant);
        assert_eq!(s.median_lag, None);
        assert_eq!(s.significant_fraction, 0.0);
    }

    #[test]
    fn filtering_ignores_insignificant_years() {
        let s = aggregate_years(&[result(10, 0.01), result(90, 0.5), result(12, 0.02)], 0.05);
        assert_eq!(s.median_lag, Some(11.0));
        assert!((s.significant_fraction - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lasso_recovers_shift_of_sparse_reference() {
        let n = 120;
        let mut x = vec![0.0; n];
        for &(i, a) in &[(10, 1.0), (25, 2.0), (40, 0.5), (70, 1.5)] {
            x[i] = a;
        }
        let mut y = vec![0.0; n];
        for i in 0..n - 20 {
            y[i + 20] = x[i];
        }
        y.iter_mut().enumerate().for_each(|(i, v)| *v += 1e-3 * ((i * 37 % 11) as f64 - 5.0));
        let grid = restrict_grid(n, 0.5).unwrap();
        let specs = EstimatorSpec::all();
        for r in estimate_many(&sig(x), &sig(y), &grid, &specs, PathSettings::default()) {
            let r = r.unwrap();
            assert_eq!(r.lag_hat, 20, "{}", r.spec);
        }
    }

    #[test]
    fn overpenalized_fit_is_reported() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 1.3).cos()).collect();
        let grid = restrict_grid(40, 0.5).unwrap();
        // A quantile at the very top of a two-point path selects lambda_max.
        let spec = EstimatorSpec::lasso(LambdaSelection::QuantileOfPath(0.9), false);
        let settings = PathSettings {
            length: 2,
            lambda_min_ratio: 0.5,
        };
        let r = estimate_many(&sig(x), &sig(y), &grid, &[spec], settings).pop().unwrap();
        assert_eq!(r, Err(Error::AllZeroReconstruction));
    }
}
