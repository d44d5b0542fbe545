//! Piecewise-linear LASSO path (LARS with the lasso modification).
//!
//! Tracks the correlations `c = Sᵀ r` while the common active level
//! `C = λ/2` decreases. Between events the active coefficients move along
//! `G_AA⁻¹ sign(c_A)`; an event is a new column reaching the active level or
//! an active coefficient crossing zero. The solver stops exactly at each
//! requested penalty and re-solves the active system there, so recorded fits
//! carry no accumulated drift.

use std::cell::RefCell;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::assoc::{dot, ShiftMatrix};
use crate::error::{Error, Result};

use super::LassoFit;

/// Relative pivot floor under which a column is treated as dependent on
/// the active set and excluded from further consideration.
const PIVOT_FLOOR: f64 = 1e-10;

pub(crate) struct Homotopy<'a> {
    design: &'a ShiftMatrix,
    /// Response with excluded rows zeroed.
    x: Vec<f64>,
    /// Row weights (1 kept, 0 held out); `None` keeps every row.
    weights: Option<Vec<f64>>,
    norms: Vec<f64>,
    max_steps: usize,
    corr: Correlator,
}

/// `Sᵀ u` for every column at once as a circular cross-correlation.
struct Correlator {
    n: usize,
    size: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    y_hat: Vec<Complex<f64>>,
    buf: RefCell<(Vec<f64>, Vec<Complex<f64>>)>,
}

impl Correlator {
    fn new(y: &[f64]) -> Self {
        let n = y.len();
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut input = forward.make_input_vec();
        input[..n].copy_from_slice(y);
        let mut y_hat = forward.make_output_vec();
        forward
            .process(&mut input, &mut y_hat)
            .expect("buffer sizes come from the plan");
        let buf = RefCell::new((input, forward.make_output_vec()));
        Correlator {
            n,
            size,
            forward,
            inverse,
            y_hat,
            buf,
        }
    }

    /// `S v` for a coefficient vector given on its support.
    fn mul(&self, support: &[usize], values: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut guard = self.buf.borrow_mut();
        let (time, freq) = &mut *guard;
        time.fill(0.0);
        // Coefficient at lag l sits at index -l (mod size).
        for (&col, &v) in support.iter().zip(values) {
            let lag = col as i64 - (n as i64 - 1);
            time[(-lag).rem_euclid(self.size as i64) as usize] = v;
        }
        self.forward
            .process(time, freq)
            .expect("buffer sizes come from the plan");
        for (f, y) in freq.iter_mut().zip(&self.y_hat) {
            *f *= y;
        }
        freq[0].im = 0.0;
        if let Some(last) = freq.last_mut() {
            last.im = 0.0;
        }
        self.inverse
            .process(freq, time)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / self.size as f64;
        time[..n].iter().map(|v| v * scale).collect()
    }

    fn tmul(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut guard = self.buf.borrow_mut();
        let (time, freq) = &mut *guard;
        time[..n].copy_from_slice(u);
        time[n..].fill(0.0);
        self.forward
            .process(time, freq)
            .expect("buffer sizes come from the plan");
        for (f, y) in freq.iter_mut().zip(&self.y_hat) {
            *f = f.conj() * y;
        }
        // The inverse transform expects purely real end bins.
        freq[0].im = 0.0;
        if let Some(last) = freq.last_mut() {
            last.im = 0.0;
        }
        self.inverse
            .process(freq, time)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / self.size as f64;
        // Column c holds lag c - (n - 1); negative lags wrap to the top.
        let mut out = Vec::with_capacity(2 * n - 1);
        out.extend(time[self.size - (n - 1)..].iter().map(|v| v * scale));
        out.extend(time[..n].iter().map(|v| v * scale));
        out
    }
}

struct State {
    coefs: Vec<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
    /// Lower Cholesky factor of `G_AA`, row-major, row `i` has `i + 1` entries.
    chol: Vec<Vec<f64>>,
    c: Vec<f64>,
    level: f64,
    excluded: Vec<bool>,
}

impl<'a> Homotopy<'a> {
    pub(crate) fn new(design: &'a ShiftMatrix, response: &[f64], include: Option<&[bool]>) -> Self {
        let weights: Option<Vec<f64>> =
            include.map(|m| m.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect());
        let mut x = response.to_vec();
        if let Some(w) = &weights {
            for (v, wi) in x.iter_mut().zip(w) {
                *v *= wi;
            }
        }
        let mut h = Homotopy {
            design,
            x,
            weights,
            norms: Vec::new(),
            max_steps: 0,
            corr: Correlator::new(design.source()),
        };
        h.norms = (0..design.ncols()).map(|j| h.gram(j, j)).collect();
        h.max_steps = 20 * design.ncols();
        h
    }

    pub(crate) fn lambda_max(&self) -> f64 {
        2.0 * self
            .design
            .tmul(&self.x)
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// `S_iᵀ W S_j` over kept rows.
    fn gram(&self, i: usize, j: usize) -> f64 {
        let (si, wi) = self.design.window(i);
        let (sj, wj) = self.design.window(j);
        let lo = si.max(sj);
        let hi = (si + wi.len()).min(sj + wj.len());
        if lo >= hi {
            return 0.0;
        }
        let a = &wi[lo - si..hi - si];
        let b = &wj[lo - sj..hi - sj];
        match &self.weights {
            None => dot(a, b),
            Some(w) => weighted_dot(a, b, &w[lo..hi]),
        }
    }

    fn residual(&self, coefs: &[f64]) -> Vec<f64> {
        let fitted = self.design.mul(coefs);
        let mut r: Vec<f64> = self.x.iter().zip(&fitted).map(|(x, f)| x - f).collect();
        if let Some(w) = &self.weights {
            for (v, wi) in r.iter_mut().zip(w) {
                *v *= wi;
            }
        }
        r
    }

    fn correlations(&self, r: &[f64]) -> Vec<f64> {
        self.design.tmul(r)
    }

    /// Fits at each penalty in `lambdas` (must be nonincreasing).
    pub(crate) fn path(&self, lambdas: &[f64]) -> Result<Vec<LassoFit>> {
        let p = self.design.ncols();
        let c = self.correlations(&self.x);
        let level = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut st = State {
            coefs: vec![0.0; p],
            active: Vec::new(),
            signs: Vec::new(),
            chol: Vec::new(),
            c,
            level,
            excluded: self.norms.iter().map(|&d| d == 0.0).collect(),
        };
        let mut steps = 0usize;
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let target = 0.5 * lambda;
            while st.level > target {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::NonConvergence { lambda, sweeps: steps });
                }
                self.step(&mut st, target);
            }
            out.push(self.record(&mut st, lambda));
        }
        Ok(out)
    }

    fn step(&self, st: &mut State, target: f64) {
        if st.active.is_empty() {
            let j = (0..st.c.len())
                .filter(|&j| !st.excluded[j])
                .max_by(|&a, &b| st.c[a].abs().total_cmp(&st.c[b].abs()));
            match j {
                Some(j) if st.c[j] != 0.0 => {
                    self.add(st, j);
                }
                _ => {
                    st.level = target;
                    return;
                }
            }
            // The first column enters at the current level.
            if st.active.is_empty() {
                return;
            }
        }
        // Columns that drifted above the active level join immediately.
        let slack = 1e-9 * st.level.max(1e-300);
        let late: Vec<usize> = (0..st.c.len())
            .filter(|&j| !st.excluded[j] && st.coefs[j] == 0.0 && st.c[j].abs() > st.level + slack)
            .filter(|j| !st.active.contains(j))
            .collect();
        for j in late {
            self.add(st, j);
        }
        let w = chol_solve(&st.chol, &st.signs);
        let mut u = self.corr.mul(&st.active, &w);
        if let Some(m) = &self.weights {
            for (v, wi) in u.iter_mut().zip(m) {
                *v *= wi;
            }
        }
        let a = self.corr.tmul(&u);

        let level = st.level;
        let mut gamma = level - target;
        let mut event: Option<(usize, bool)> = None;
        let mut is_active = vec![false; st.c.len()];
        for &j in &st.active {
            is_active[j] = true;
        }
        let tiny = 1e-14 * level.max(1.0);
        for j in 0..st.c.len() {
            if is_active[j] || st.excluded[j] {
                continue;
            }
            let cj = st.c[j];
            let aj = a[j];
            for (num, den) in [(level - cj, 1.0 - aj), (level + cj, 1.0 + aj)] {
                if den > 1e-12 {
                    let g = num / den;
                    if g > tiny && g < gamma {
                        gamma = g;
                        event = Some((j, true));
                    }
                }
            }
        }
        for (k, &j) in st.active.iter().enumerate() {
            if w[k] != 0.0 {
                let g = -st.coefs[j] / w[k];
                if g > tiny && g < gamma {
                    gamma = g;
                    event = Some((k, false));
                }
            }
        }

        for (k, &j) in st.active.iter().enumerate() {
            st.coefs[j] += gamma * w[k];
        }
        for (cj, aj) in st.c.iter_mut().zip(&a) {
            *cj -= gamma * aj;
        }
        st.level -= gamma;

        match event {
            Some((j, true)) => {
                self.add(st, j);
            }
            Some((k, false)) => {
                let j = st.active.remove(k);
                st.signs.remove(k);
                st.coefs[j] = 0.0;
                chol_delete(&mut st.chol, k);
            }
            None => {}
        }
    }

    /// Appends column `j` to the active set; returns `false` when it is
    /// numerically dependent on the current active columns.
    fn add(&self, st: &mut State, j: usize) -> bool {
        let g: Vec<f64> = st.active.iter().map(|&i| self.gram(i, j)).collect();
        let row = forward_solve(&st.chol, &g);
        let d = self.norms[j] - dot(&row, &row);
        if d <= PIVOT_FLOOR * self.norms[j] {
            st.excluded[j] = true;
            return false;
        }
        let mut row = row;
        row.push(d.sqrt());
        st.chol.push(row);
        st.active.push(j);
        st.signs.push(st.c[j].signum());
        true
    }

    /// Re-solves the active system at `lambda` and refreshes the correlations.
    fn record(&self, st: &mut State, lambda: f64) -> LassoFit {
        let target = 0.5 * lambda;
        if !st.active.is_empty() {
            let b: Vec<f64> = st
                .active
                .iter()
                .zip(&st.signs)
                .map(|(&j, &sg)| self.design.column_dot(j, &self.x) - target * sg)
                .collect();
            let exact = chol_solve(&st.chol, &b);
            let consistent = exact
                .iter()
                .zip(&st.signs)
                .all(|(v, s)| v * s > 0.0);
            if consistent {
                for (&j, &v) in st.active.iter().zip(&exact) {
                    st.coefs[j] = v;
                }
            }
        }
        let r = self.residual(&st.coefs);
        st.c = self.correlations(&r);
        st.level = target;
        let nonzero_count = st.coefs.iter().filter(|v| **v != 0.0).count();
        let objective = dot(&r, &r) + lambda * st.coefs.iter().map(|v| v.abs()).sum::<f64>();
        LassoFit {
            coefficients: st.coefs.clone(),
            lambda,
            nonzero_count,
            objective,
            sweeps: 0,
        }
    }
}

/// Removes row/column `k` from the factored matrix with Givens rotations.
fn chol_delete(l: &mut Vec<Vec<f64>>, k: usize) {
    l.remove(k);
    let m = l.len();
    for t in k..m {
        let (a, b) = (l[t][t], l[t][t + 1]);
        let r = a.hypot(b);
        let (c, s) = (a / r, b / r);
        for row in l[t..].iter_mut() {
            let (x, y) = (row[t], row[t + 1]);
            row[t] = c * x + s * y;
            row[t + 1] = -s * x + c * y;
        }
        l[t].truncate(t + 1);
    }
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb, cw) = (a.chunks_exact(8), b.chunks_exact(8), w.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .zip(cw.remainder())
        .map(|((p, q), m)| p * q * m)
        .sum();
    for ((p, q), m) in ca.zip(cb).zip(cw) {
        for k in 0..8 {
            acc[k] += p[k] * q[k] * m[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let s = b[i] - dot(&row[..i], &z);
        z.push(s / row[i]);
    }
    z
}

/// Solves `L Lᵀ v = b`.
fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let z = forward_solve(l, b);
    let mut v = z;
    for i in (0..v.len()).rev() {
        let row = &l[i];
        let vi = v[i] / row[i];
        v[i] = vi;
        for (t, &lik) in v[..i].iter_mut().zip(&row[..i]) {
            *t -= lik * vi;
        }
    }
    v
}
