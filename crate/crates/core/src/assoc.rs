//! Lagged Pearson-type association between two series and its shift-matrix
//! formulation.
//!
//! For a lag `l >= 0` the association averages `M(x_k) * M(y_{k+l})` over the
//! `n - l` overlapping samples; negative lags mirror this with `x` leading.
//! `M` is the identity ([`ScalingMode::Unscaled`]), a global z-score
//! ([`ScalingMode::Standard`]) or a z-score whose moments are recomputed on
//! the overlap window of each lag ([`ScalingMode::Trimmed`]).
//!
//! The shift matrix `S` (n rows, 2n-1 columns) holds zero-padded windows of
//! `y`, one per lag, so that `Sᵀx = J Γ` where `J` carries the overlap
//! lengths `(1, 2, ..., n, ..., 2, 1)` and `Γ` the unscaled profile.

use std::fmt;

use crate::error::{Error, Result};
use crate::signal::{moments, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalingMode {
    Unscaled,
    Standard,
    Trimmed,
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingMode::Unscaled => "unscaled",
            ScalingMode::Standard => "standard",
            ScalingMode::Trimmed => "trimmed",
        })
    }
}

/// Strictly increasing set of integer lags for a series of length `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagGrid {
    lags: Vec<i64>,
    n: usize,
}

impl LagGrid {
    pub fn new(n: usize, lags: Vec<i64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DegenerateGrid("series length is zero".into()));
        }
        if lags.is_empty() {
            return Err(Error::DegenerateGrid("no lags".into()));
        }
        let max = n as i64 - 1;
        for &l in &lags {
            if l.abs() > max {
                return Err(Error::LagOutOfRange { lag: l, max });
            }
        }
        if lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateGrid("lags must be strictly increasing".into()));
        }
        Ok(LagGrid { lags, n })
    }

    /// All `2n - 1` lags from `-(n-1)` to `n-1`.
    pub fn full(n: usize) -> Result<Self> {
        Self::symmetric(n, n.saturating_sub(1))
    }

    /// `{-half_width, ..., half_width}`.
    pub fn symmetric(n: usize, half_width: usize) -> Result<Self> {
        let h = half_width as i64;
        Self::new(n, (-h..=h).collect())
    }

    pub fn lags(&self) -> &[i64] {
        &self.lags
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn contains(&self, lag: i64) -> bool {
        self.lags.binary_search(&lag).is_ok()
    }
}

/// Association values over a lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationProfile {
    pub grid: LagGrid,
    pub gamma: Vec<f64>,
    pub scaling: ScalingMode,
}

impl AssociationProfile {
    pub fn get(&self, lag: i64) -> Option<f64> {
        self.grid
            .lags()
            .binary_search(&lag)
            .ok()
            .map(|i| self.gamma[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.grid.lags().iter().copied().zip(self.gamma.iter().copied())
    }
}

/// Implicit `n x (2n-1)` shift matrix built from `y`.
///
/// Column `j` (0-based) corresponds to lag `j - (n-1)`; its entry in row `k`
/// is `y[k + lag]` when that index falls inside the series and zero otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMatrix {
    y: Vec<f64>,
}

impl ShiftMatrix {
    pub fn new(y: &[f64]) -> Self {
        ShiftMatrix { y: y.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn ncols(&self) -> usize {
        2 * self.y.len() - 1
    }

    pub fn source(&self) -> &[f64] {
        &self.y
    }

    pub fn lag_of(&self, col: usize) -> i64 {
        col as i64 - (self.nrows() as i64 - 1)
    }

    pub fn col_of(&self, lag: i64) -> usize {
        (lag + self.nrows() as i64 - 1) as usize
    }

    /// Nonzero window of a column: `(first_row, values)`.
    pub fn window(&self, col: usize) -> (usize, &[f64]) {
        let n = self.nrows();
        let lag = self.lag_of(col);
        if lag >= 0 {
            (0, &self.y[lag as usize..])
        } else {
            let shift = (-lag) as usize;
            (shift, &self.y[..n - shift])
        }
    }

    /// Column as a dense vector of length `n`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        let (start, w) = self.window(col);
        out[start..start + w.len()].copy_from_slice(w);
        out
    }

    /// `S[·, col]ᵀ v`.
    pub fn column_dot(&self, col: usize, v: &[f64]) -> f64 {
        let (start, w) = self.window(col);
        dot(w, &v[start..start + w.len()])
    }

    /// `Sᵀ v` over all columns.
    pub fn tmul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.ncols()).map(|c| self.column_dot(c, v)).collect()
    }

    /// `S s`.
    pub fn mul(&self, coefs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for (col, &c) in coefs.iter().enumerate() {
            if c != 0.0 {
                self.axpy_column(col, c, &mut out);
            }
        }
        out
    }

    /// `out += a * S[·, col]`.
    pub fn axpy_column(&self, col: usize, a: f64, out: &mut [f64]) {
        let (start, w) = self.window(col);
        for (o, &v) in out[start..start + w.len()].iter_mut().zip(w) {
            *o += a * v;
        }
    }
}

pub fn build_shift_matrix(y: &Signal) -> ShiftMatrix {
    ShiftMatrix::new(y)
}

/// Diagonal of `J`: `(1, 2, ..., n-1, n, n-1, ..., 2, 1)`.
pub fn weight_matrix_diagonal(n: usize) -> Vec<f64> {
    (1..=n).chain((1..n).rev()).map(|v| v as f64).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (p, q) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..8 {
            acc[k] += p[k] * q[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| p * q).sum();
    acc.iter().sum::<f64>() + tail
}

/// Overlapping windows of `x` and `y` used at `lag`.
pub(crate) fn overlap<'a>(x: &'a [f64], y: &'a [f64], lag: i64) -> (&'a [f64], &'a [f64]) {
    let n = x.len();
    let a = lag.unsigned_abs() as usize;
    if lag >= 0 {
        (&x[..n - a], &y[a..])
    } else {
        (&x[a..], &y[..n - a])
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

fn check_lag(n: usize, lag: i64) -> Result<()> {
    let max = n as i64 - 1;
    if lag.abs() > max {
        return Err(Error::LagOutOfRange { lag, max });
    }
    Ok(())
}

/// Association at a single lag, evaluated term by term.
pub fn association_at_lag(x: &Signal, y: &Signal, lag: i64, scaling: ScalingMode) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    check_lag(n, lag)?;
    let (xs, ys) = overlap(x, y, lag);
    let m = xs.len() as f64;
    let sum = match scaling {
        ScalingMode::Unscaled => dot(xs, ys),
        ScalingMode::Standard => {
            let (mx, sx) = moments(x)?;
            let (my, sy) = moments(y)?;
            xs.iter()
                .zip(ys)
                .map(|(a, b)| ((a - mx) / sx) * ((b - my) / sy))
                .sum()
        }
        ScalingMode::Trimmed => trimmed_sum(xs, ys)?,
    };
    Ok(sum / m)
}

fn trimmed_sum(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, sx) = moments(xs)?;
    let (my, sy) = moments(ys)?;
    Ok(xs
        .iter()
        .zip(ys)
        .map(|(a, b)| ((a - mx) / sx) * ((b - my) / sy))
        .sum())
}

/// Association over every lag of `grid`, computed from shift-matrix columns.
pub fn association_profile(
    x: &Signal,
    y: &Signal,
    grid: &LagGrid,
    scaling: ScalingMode,
) -> Result<AssociationProfile> {
    check_pair(x, y)?;
    let n = x.len();
    if grid.n() != n {
        return Err(Error::LengthMismatch(grid.n(), n));
    }
    let gamma = match scaling {
        ScalingMode::Unscaled => column_profile(x, &ShiftMatrix::new(y), grid),
        ScalingMode::Standard => {
            let (mx, sx) = moments(x)?;
            let (my, sy) = moments(y)?;
            let xz: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();
            let yz: Vec<f64> = y.iter().map(|v| (v - my) / sy).collect();
            column_profile(&xz, &ShiftMatrix::new(&yz), grid)
        }
        ScalingMode::Trimmed => {
            let s = ShiftMatrix::new(y);
            grid.lags()
                .iter()
                .map(|&lag| {
                    let (start, w) = s.window(s.col_of(lag));
                    let xs = &x[start..start + w.len()];
                    trimmed_sum(xs, w).map(|v| v / w.len() as f64)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(AssociationProfile {
        grid: grid.clone(),
        gamma,
        scaling,
    })
}

fn column_profile(x: &[f64], s: &ShiftMatrix, grid: &LagGrid) -> Vec<f64> {
    grid.lags()
        .iter()
        .map(|&lag| {
            let col = s.col_of(lag);
            let (_, w) = s.window(col);
            s.column_dot(col, x) / w.len() as f64
        })
        .collect()
}
