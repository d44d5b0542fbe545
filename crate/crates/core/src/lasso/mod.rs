//! ℓ1-penalized least squares on a shift-matrix design.
//!
//! Minimizes `Σ_i (x_i - S[i,·] s)² + λ Σ_j |s_j|`. The objective is kept
//! exactly in that form (no `1/2n` factor), so the coordinate gradient is
//! `-2 S_jᵀ r` and the zero solution is optimal for `λ >= max_j |2 S_jᵀ x|`.
//!
//! Single fits use cyclic coordinate descent with warm starts. Paths and
//! cross-validation follow the piecewise-linear homotopy and read off the
//! fits at the log-spaced grid points.

use rayon::prelude::*;

mod homotopy;

use homotopy::Homotopy;

use crate::assoc::{dot, ShiftMatrix};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Coordinate descent stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_sweeps: usize,
    /// Largest coefficient change allowed in a converged sweep.
    pub tol: f64,
    /// Stationarity tolerance on the coordinate gradients.
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_sweeps: 10_000,
            tol: 1e-9,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: &'a ShiftMatrix,
    pub response: &'a [f64],
    pub lambda: f64,
    /// Columns allowed to enter the fit; all of them when `None`.
    pub columns: Option<&'a [usize]>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a ShiftMatrix, response: &'a [f64], lambda: f64) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(Error::LengthMismatch(response.len(), design.nrows()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidPenalty(lambda));
        }
        Ok(LassoProblem {
            design,
            response,
            lambda,
            columns: None,
        })
    }

    /// The sub-problem on the given columns; the others stay at zero.
    pub fn restricted(
        design: &'a ShiftMatrix,
        response: &'a [f64],
        lambda: f64,
        columns: &'a [usize],
    ) -> Result<Self> {
        if let Some(&j) = columns.iter().find(|&&j| j >= design.ncols()) {
            return Err(Error::InvalidParameter(format!(
                "column {j} outside a design with {} columns",
                design.ncols()
            )));
        }
        Ok(LassoProblem {
            columns: Some(columns),
            ..Self::new(design, response, lambda)?
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub nonzero_count: usize,
    pub objective: f64,
    pub sweeps: usize,
}

impl LassoFit {
    fn zero(p: usize, lambda: f64, objective: f64) -> Self {
        LassoFit {
            coefficients: vec![0.0; p],
            lambda,
            nonzero_count: 0,
            objective,
            sweeps: 0,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }
}

/// Fits along a decreasing penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub entries: Vec<LassoFit>,
}

impl SolutionPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry whose penalty equals `lambda` exactly.
    pub fn fit_at(&self, lambda: f64) -> Option<&LassoFit> {
        self.entries.iter().find(|e| e.lambda == lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Folds {
    K(usize),
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSelection {
    /// Lower empirical `q`-quantile of the path's penalty values.
    QuantileOfPath(f64),
    CrossValidation(Folds),
}

impl LambdaSelection {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaSelection::QuantileOfPath(q) if !(q > 0.0 && q < 1.0) => Err(
                Error::InvalidParameter(format!("quantile must lie in (0, 1), got {q}")),
            ),
            LambdaSelection::CrossValidation(Folds::K(k)) if k < 2 => Err(
                Error::InvalidParameter(format!("cross validation needs at least 2 folds, got {k}")),
            ),
            _ => Ok(()),
        }
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest penalty at which the zero vector solves the problem.
pub fn lambda_max(design: &ShiftMatrix, response: &[f64]) -> f64 {
    design
        .tmul(response)
        .iter()
        .fold(0.0f64, |m, c| m.max((2.0 * c).abs()))
}

pub fn objective(design: &ShiftMatrix, response: &[f64], coefs: &[f64], lambda: f64) -> f64 {
    let fitted = design.mul(coefs);
    let rss: f64 = response
        .iter()
        .zip(&fitted)
        .map(|(x, f)| (x - f) * (x - f))
        .sum();
    rss + lambda * coefs.iter().map(|c| c.abs()).sum::<f64>()
}

/// Largest violation of the stationarity conditions at `coefs`.
///
/// Active coordinates must satisfy `-2 S_jᵀ r = -λ sign(s_j)`, inactive ones
/// `|2 S_jᵀ r| <= λ`.
pub fn kkt_violation(design: &ShiftMatrix, response: &[f64], coefs: &[f64], lambda: f64) -> f64 {
    let fitted = design.mul(coefs);
    let r: Vec<f64> = response.iter().zip(&fitted).map(|(x, f)| x - f).collect();
    kkt_from_residual(design, &r, coefs, lambda, None)
}

fn kkt_from_residual(
    design: &ShiftMatrix,
    r: &[f64],
    coefs: &[f64],
    lambda: f64,
    norms: Option<&[f64]>,
) -> f64 {
    let mut worst = 0.0f64;
    for (j, &s) in coefs.iter().enumerate() {
        if norms.is_some_and(|d| d[j] == 0.0) {
            continue;
        }
        let grad = -2.0 * design.column_dot(j, r);
        let v = if s != 0.0 {
            (grad + lambda * s.signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Coordinate descent state; excluded columns carry a zero norm.
struct Solver<'a> {
    design: &'a ShiftMatrix,
    x: Vec<f64>,
    norms: Vec<f64>,
    opts: SolverOptions,
}

impl<'a> Solver<'a> {
    fn new(design: &'a ShiftMatrix, response: &[f64], columns: Option<&[usize]>, opts: SolverOptions) -> Self {
        let mut norms: Vec<f64> = (0..design.ncols())
            .map(|j| {
                let (_, w) = design.window(j);
                dot(w, w)
            })
            .collect();
        if let Some(cols) = columns {
            let mut keep = vec![false; norms.len()];
            for &j in cols {
                keep[j] = true;
            }
            for (d, k) in norms.iter_mut().zip(keep) {
                if !k {
                    *d = 0.0;
                }
            }
        }
        Solver {
            design,
            x: response.to_vec(),
            norms,
            opts,
        }
    }

    fn p(&self) -> usize {
        self.design.ncols()
    }

    fn residual(&self, coefs: &[f64]) -> Vec<f64> {
        let fitted = self.design.mul(coefs);
        self.x.iter().zip(&fitted).map(|(x, f)| x - f).collect()
    }

    fn lambda_max(&self) -> f64 {
        self.design
            .tmul(&self.x)
            .iter()
            .zip(&self.norms)
            .filter(|(_, d)| **d > 0.0)
            .fold(0.0f64, |m, (c, _)| m.max((2.0 * c).abs()))
    }

    fn objective(&self, r: &[f64], coefs: &[f64], lambda: f64) -> f64 {
        dot(r, r) + lambda * coefs.iter().map(|c| c.abs()).sum::<f64>()
    }

    /// One coordinate update; returns the absolute coefficient change.
    #[inline]
    fn update(&self, j: usize, lambda: f64, coefs: &mut [f64], r: &mut [f64]) -> f64 {
        let d = self.norms[j];
        if d == 0.0 {
            return 0.0;
        }
        let (start, w) = self.design.window(j);
        let rw = &mut r[start..start + w.len()];
        let old = coefs[j];
        let z = dot(w, rw) + d * old;
        let new = soft_threshold(z, 0.5 * lambda) / d;
        let delta = new - old;
        if delta != 0.0 {
            coefs[j] = new;
            for (ri, &v) in rw.iter_mut().zip(w) {
                *ri -= delta * v;
            }
        }
        delta.abs()
    }

    fn fit(&self, lambda: f64, warm: Option<&[f64]>) -> Result<LassoFit> {
        let p = self.p();
        if self.x.iter().all(|&v| v == 0.0) {
            return Ok(LassoFit::zero(p, lambda, 0.0));
        }
        let mut coefs = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            _ => vec![0.0; p],
        };
        let mut r = self.residual(&coefs);
        let mut sweeps = 0usize;
        let mut active: Vec<usize> = Vec::new();
        loop {
            // Full pass: admits new coordinates into the active set.
            if sweeps >= self.opts.max_sweeps {
                return Err(Error::NonConvergence { lambda, sweeps });
            }
            let mut change = 0.0f64;
            for j in 0..p {
                change = change.max(self.update(j, lambda, &mut coefs, &mut r));
            }
            sweeps += 1;
            if change <= self.opts.tol {
                // Refresh the residual to shed accumulated rounding, then certify.
                r = self.residual(&coefs);
                if kkt_from_residual(self.design, &r, &coefs, lambda, Some(&self.norms))
                    <= self.opts.kkt_tol
                {
                    break;
                }
            }
            active.clear();
            active.extend((0..p).filter(|&j| coefs[j] != 0.0));
            loop {
                if sweeps >= self.opts.max_sweeps {
                    return Err(Error::NonConvergence { lambda, sweeps });
                }
                let mut change = 0.0f64;
                for &j in &active {
                    change = change.max(self.update(j, lambda, &mut coefs, &mut r));
                }
                sweeps += 1;
                if change <= self.opts.tol {
                    break;
                }
            }
        }
        let nonzero_count = coefs.iter().filter(|c| **c != 0.0).count();
        let objective = self.objective(&r, &coefs, lambda);
        Ok(LassoFit {
            coefficients: coefs,
            lambda,
            nonzero_count,
            objective,
            sweeps,
        })
    }
}

pub fn fit(problem: &LassoProblem<'_>, warm_start: Option<&[f64]>) -> Result<LassoFit> {
    fit_with(problem, warm_start, SolverOptions::default())
}

pub fn fit_with(
    problem: &LassoProblem<'_>,
    warm_start: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<LassoFit> {
    let solver = Solver::new(problem.design, problem.response, problem.columns, opts);
    let lm = solver.lambda_max();
    if problem.lambda >= lm {
        let obj = dot(problem.response, problem.response);
        return Ok(LassoFit::zero(problem.design.ncols(), problem.lambda, obj));
    }
    solver.fit(problem.lambda, warm_start)
}

/// Log-spaced penalties from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(lambda_max: f64, path_length: usize, ratio: f64) -> Vec<f64> {
    // A zero response has no natural scale; any penalty yields the zero fit.
    let top = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    let steps = (path_length - 1) as f64;
    (0..path_length)
        .map(|k| {
            if k == 0 {
                top
            } else {
                top * ratio.powf(k as f64 / steps)
            }
        })
        .collect()
}

pub fn solution_path(
    design: &ShiftMatrix,
    response: &[f64],
    path_length: usize,
    lambda_min_ratio: f64,
) -> Result<SolutionPath> {
    if path_length < 2 {
        return Err(Error::InvalidParameter(format!(
            "path length must be at least 2, got {path_length}"
        )));
    }
    if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_min_ratio must lie in (0, 1), got {lambda_min_ratio}"
        )));
    }
    if response.len() != design.nrows() {
        return Err(Error::LengthMismatch(response.len(), design.nrows()));
    }
    let solver = Homotopy::new(design, response, None);
    let lambdas = lambda_grid(solver.lambda_max(), path_length, lambda_min_ratio);
    let mut path = SolutionPath {
        entries: solver.path(&lambdas)?,
    };
    // The first entry is the zero fit by construction.
    let rss = dot(response, response);
    path.entries[0] = LassoFit::zero(design.ncols(), lambdas[0], rss);
    Ok(path)
}

/// Mean held-out squared prediction error for every path penalty.
pub fn cross_validation_errors(
    path: &SolutionPath,
    folds: Folds,
    design: &ShiftMatrix,
    response: &[f64],
) -> Result<Vec<f64>> {
    let n = design.nrows();
    let k = match folds {
        Folds::K(k) => k.min(n),
        Folds::LeaveOneOut => n,
    };
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let lambdas = path.lambdas();
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            // Interleaved assignment: row i is held out in fold i mod k.
            let include: Vec<bool> = (0..n).map(|i| i % k != fold).collect();
            let solver = Homotopy::new(design, response, Some(&include));
            let fold_path = solver.path(&lambdas)?;
            Ok(fold_path
                .iter()
                .map(|fit| {
                    let fitted = design.mul(&fit.coefficients);
                    (0..n)
                        .filter(|&i| !include[i])
                        .map(|i| (response[i] - fitted[i]).powi(2))
                        .sum::<f64>()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut errors = vec![0.0; lambdas.len()];
    for fold in &per_fold {
        for (e, v) in errors.iter_mut().zip(fold) {
            *e += v;
        }
    }
    for e in &mut errors {
        *e /= n as f64;
    }
    Ok(errors)
}

pub fn select_lambda(
    path: &SolutionPath,
    rule: LambdaSelection,
    design: &ShiftMatrix,
    response: &[f64],
) -> Result<f64> {
    rule.validate()?;
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    if path.len() == 1 {
        return Ok(path.entries[0].lambda);
    }
    match rule {
        LambdaSelection::QuantileOfPath(q) => {
            let mut lambdas = path.lambdas();
            lambdas.sort_by(f64::total_cmp);
            let rank = ((q * lambdas.len() as f64).ceil() as usize).clamp(1, lambdas.len());
            Ok(lambdas[rank - 1])
        }
        LambdaSelection::CrossValidation(folds) => {
            let errors = cross_validation_errors(path, folds, design, response)?;
            // Path runs from large to small penalties; strict improvement is
            // required to move toward less sparsity.
            let mut best = 0;
            for (i, &e) in errors.iter().enumerate().skip(1) {
                if e < errors[best] {
                    best = i;
                }
            }
            Ok(path.entries[best].lambda)
        }
    }
}

/// `x̃ = S s`.
pub fn sparse_reconstruct(design: &ShiftMatrix, fit: &LassoFit) -> Result<Signal> {
    if fit.coefficients.len() != design.ncols() {
        return Err(Error::LengthMismatch(fit.coefficients.len(), design.ncols()));
    }
    Signal::new(design.mul(&fit.coefficients))
}
