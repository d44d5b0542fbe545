mod common;

use common::{naive_association, pvalue_oracle, sample_moments, zscore};
use proptest::prelude::*;
use sparse_tde::assoc::{
    association_at_lag, association_profile, weight_matrix_diagonal, LagGrid, ScalingMode, ShiftMatrix,
};
use sparse_tde::bench::mse_from_results;
use sparse_tde::lasso::{
    fit, kkt_violation, lambda_grid, lambda_max, objective, soft_threshold, solution_path, LassoProblem,
};
use sparse_tde::signal::{standardize, Signal};
use sparse_tde::simulate::{impulse, simulate_pair, AmountModel, ImpulseSpec, TransitionMatrix};
use sparse_tde::tde::{aggregate_years, argmax_lag, no_correlation_pvalue, EstimatorSpec, TdeResult};

fn series(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (min..=max).prop_flat_map(|n| prop::collection::vec(-10.0f64..10.0, n))
}

fn pair(min: usize, max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (min..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

fn nonconstant(v: &[f64]) -> bool {
    let (_, sd) = sample_moments(v);
    sd > 1e-3
}

fn sig(v: &[f64]) -> Signal {
    Signal::new(v.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent_with_unit_moments(v in series(2, 80)) {
        prop_assume!(nonconstant(&v));
        let z = standardize(&sig(&v)).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-12);
        prop_assert!((sd - 1.0).abs() < 1e-12);
        let zz = standardize(&z).unwrap();
        for (a, b) in z.iter().zip(zz.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matricial_identity((x, y) in pair(2, 60)) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let x = standardize(&sig(&x)).unwrap();
        let y = standardize(&sig(&y)).unwrap();
        let n = x.len();
        let s = ShiftMatrix::new(&y);
        let lhs = s.tmul(&x);
        let profile = association_profile(&x, &y, &LagGrid::full(n).unwrap(), ScalingMode::Unscaled).unwrap();
        let j = weight_matrix_diagonal(n);
        for (k, (lag, g)) in profile.iter().enumerate() {
            prop_assert_eq!(s.lag_of(k), lag);
            prop_assert!((lhs[k] - j[k] * g).abs() <= 1e-10, "lag {}: {} vs {}", lag, lhs[k], j[k] * g);
        }
    }

    #[test]
    fn profile_matches_naive_loop((x, y) in pair(2, 40), mode in 0usize..3) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let scaling = [ScalingMode::Unscaled, ScalingMode::Standard, ScalingMode::Trimmed][mode];
        let n = x.len();
        let grid = LagGrid::full(n).unwrap();
        match association_profile(&sig(&x), &sig(&y), &grid, scaling) {
            Ok(profile) => {
                for (lag, g) in profile.iter() {
                    let want = naive_association(&x, &y, lag, scaling);
                    prop_assert!((g - want).abs() <= 1e-10 * want.abs().max(1.0), "lag {}: {} vs {}", lag, g, want);
                }
            }
            // Trimmed scaling rejects constant overlap windows, which short
            // ends of random data can produce only with length-1 windows.
            Err(e) => prop_assert_eq!(scaling, ScalingMode::Trimmed, "{}", e),
        }
    }

    #[test]
    fn association_is_symmetric((x, y) in pair(3, 40), l in -2i64..=2, mode in 0usize..2) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let scaling = [ScalingMode::Unscaled, ScalingMode::Standard][mode];
        let a = association_at_lag(&sig(&x), &sig(&y), l, scaling).unwrap();
        let b = association_at_lag(&sig(&y), &sig(&x), -l, scaling).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn scalings_agree_on_standardized_inputs((x, y) in pair(3, 40)) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let x = standardize(&sig(&x)).unwrap();
        let y = standardize(&sig(&y)).unwrap();
        let grid = LagGrid::full(x.len()).unwrap();
        let u = association_profile(&x, &y, &grid, ScalingMode::Unscaled).unwrap();
        let s = association_profile(&x, &y, &grid, ScalingMode::Standard).unwrap();
        for ((_, a), (_, b)) in u.iter().zip(s.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let t0 = association_at_lag(&x, &y, 0, ScalingMode::Trimmed).unwrap();
        prop_assert!((t0 - s.get(0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trimmed_equals_standard_at_lag_zero((x, y) in pair(3, 40)) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let t = association_at_lag(&sig(&x), &sig(&y), 0, ScalingMode::Trimmed).unwrap();
        let s = association_at_lag(&sig(&x), &sig(&y), 0, ScalingMode::Standard).unwrap();
        prop_assert!((t - s).abs() < 1e-12);
    }

    #[test]
    fn standard_association_obeys_overlap_bound((x, y) in pair(3, 40)) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let n = x.len();
        let p = association_profile(&sig(&x), &sig(&y), &LagGrid::full(n).unwrap(), ScalingMode::Standard).unwrap();
        for (lag, g) in p.iter() {
            let bound = n as f64 / (n as f64 - lag.abs() as f64);
            prop_assert!(g.abs() <= bound + 1e-9, "lag {}: {} > {}", lag, g, bound);
        }
    }

    #[test]
    fn argmax_survives_positive_scaling((x, y) in pair(3, 40), c in 0.01f64..100.0) {
        let grid = LagGrid::full(x.len()).unwrap();
        let a = association_profile(&sig(&x), &sig(&y), &grid, ScalingMode::Unscaled).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = association_profile(&sig(&scaled), &sig(&y), &grid, ScalingMode::Unscaled).unwrap();
        let (la, ga) = argmax_lag(&a).unwrap();
        let (lb, gb) = argmax_lag(&b).unwrap();
        // Near-ties can flip under rounding; only clear winners are compared.
        let second = a.iter().filter(|&(l, _)| l != la).map(|(_, g)| g * g).fold(0.0, f64::max);
        prop_assume!(ga * ga > second * (1.0 + 1e-9));
        prop_assert_eq!(la, lb);
        prop_assert!((gb - c * ga).abs() <= 1e-9 * (c * ga).abs().max(1.0));
    }

    #[test]
    fn noiseless_shift_is_recovered(start in 1i64..60, len in 1i64..30, tau in -40i64..40) {
        let n = 120usize;
        let end = start + len;
        prop_assume!(start + tau >= 1 && end + tau <= n as i64 + 1);
        let spec = ImpulseSpec { n, support_start: start, support_end: end, tau, sigma_d: 0.0 };
        let (f, g) = impulse(&spec).unwrap();
        let grid = LagGrid::full(n).unwrap();
        let p = association_profile(&f, &g, &grid, ScalingMode::Unscaled).unwrap();
        prop_assert_eq!(argmax_lag(&p).unwrap().0, tau);
    }

    #[test]
    fn tent_diagonal_is_overlap_length(n in 1usize..50) {
        let j = weight_matrix_diagonal(n);
        prop_assert_eq!(j.len(), 2 * n - 1);
        for (k, w) in j.iter().enumerate() {
            let lag = k as i64 - (n as i64 - 1);
            prop_assert_eq!(*w, (n as i64 - lag.abs()) as f64);
        }
    }

    #[test]
    fn soft_threshold_shrinks(z in -100.0f64..100.0, t in 0.0f64..50.0) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!(((z - s).abs() - t.min(z.abs())).abs() < 1e-12);
    }

    #[test]
    fn lambda_grid_is_log_spaced(top in 0.1f64..1e3, len in 2usize..120, ratio in 1e-4f64..0.9) {
        let g = lambda_grid(top, len, ratio);
        prop_assert_eq!(g.len(), len);
        prop_assert_eq!(g[0], top);
        prop_assert!((g[len - 1] - top * ratio).abs() <= 1e-9 * top);
        for w in g.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn pvalue_is_monotone_and_matches_oracle(r1 in 0.0f64..0.99, r2 in 0.0f64..0.99, m in 3usize..400) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assume!(hi - lo > 1e-6);
        let p_lo = no_correlation_pvalue(lo, m).unwrap();
        let p_hi = no_correlation_pvalue(hi, m).unwrap();
        prop_assert!(p_hi < p_lo);
        prop_assert!((0.0..=1.0).contains(&p_lo));
        prop_assert!((no_correlation_pvalue(-hi, m).unwrap() - p_hi).abs() < 1e-15);
        let oracle = pvalue_oracle(hi, m);
        prop_assert!((p_hi - oracle).abs() <= 1e-9 + 1e-7 * oracle, "{} vs {}", p_hi, oracle);
    }

    #[test]
    fn mse_is_bias_plus_variance(lags in prop::collection::vec(-50i64..250, 1..60), tau in 0i64..200) {
        let v: Vec<f64> = lags.iter().map(|&l| l as f64).collect();
        let mse = mse_from_results(&v, tau as f64).unwrap();
        let (mean, sd) = sample_moments(&v);
        let r = v.len() as f64;
        let identity = (mean - tau as f64).powi(2) + sd * sd * (r - 1.0) / r;
        prop_assert!((mse - identity).abs() <= 1e-9 * mse.max(1.0));
    }

    #[test]
    fn aggregate_is_shift_equivariant(lags in prop::collection::vec(-100i64..100, 1..20), shift in -50i64..50) {
        let mk = |l: i64| TdeResult {
            lag_hat: l,
            gamma_at_lag: 0.5,
            p_value: 0.001,
            overlap_length: 100,
            spec: EstimatorSpec::pn(),
            lambda: None,
        };
        let a = aggregate_years(&lags.iter().map(|&l| mk(l)).collect::<Vec<_>>(), 0.05);
        let b = aggregate_years(&lags.iter().map(|&l| mk(l + shift)).collect::<Vec<_>>(), 0.05);
        let (ma, mb) = (a.median_lag.unwrap(), b.median_lag.unwrap());
        prop_assert!((mb - ma - shift as f64).abs() < 1e-12);
        prop_assert!((a.robust_sd.unwrap() - b.robust_sd.unwrap()).abs() < 1e-9);
        prop_assert!(a.robust_sd.unwrap() >= 0.0);
        let lo = *lags.iter().min().unwrap() as f64;
        let hi = *lags.iter().max().unwrap() as f64;
        prop_assert!(lo <= ma && ma <= hi);
        prop_assert_eq!(a.significant_fraction, 1.0);
    }

    #[test]
    fn zero_fraction_of_x_is_dry_days_off_support(p_dw in 0.01f64..0.6, p_wd in 0.05f64..0.9, seed in 0u64..1000) {
        let tm = TransitionMatrix::from_switch_probabilities(p_dw, p_wd).unwrap();
        let spec = ImpulseSpec::reference(37);
        let a = simulate_pair(&spec, &tm, &AmountModel::Scenario { mean: 0.5 }, seed).unwrap();
        let b = simulate_pair(&spec, &tm, &AmountModel::Scenario { mean: 0.5 }, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let zeros = a.x.iter().filter(|&&v| v == 0.0).count();
        let dry_off = (0..spec.n)
            .filter(|&t| {
                let day = t as i64 + 1;
                !a.occurrences[t] && !(spec.support_start <= day && day < spec.support_end)
            })
            .count();
        prop_assert_eq!(zeros, dry_off);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn path_fits_are_certified_and_monotone(x in prop::collection::vec(-3.0f64..3.0, 12..=18), seed in 0u64..1000) {
        prop_assume!(nonconstant(&x));
        let mut rng = common::rng(seed);
        let y = zscore(&common::normals(&mut rng, x.len()));
        let x = zscore(&x);
        let design = ShiftMatrix::new(&y);
        let path = solution_path(&design, &x, 25, 1e-3).unwrap();
        let zero_obj = x.iter().map(|v| v * v).sum::<f64>();
        let final_lambda = path.entries.last().unwrap().lambda;
        let mut prev_norm = 0.0;
        let mut prev_obj = f64::INFINITY;
        for fit in &path.entries {
            prop_assert!(kkt_violation(&design, &x, &fit.coefficients, fit.lambda) <= 1e-6);
            prop_assert!(fit.objective <= zero_obj + 1e-9);
            prop_assert!(fit.l1_norm() + 1e-8 >= prev_norm);
            prev_norm = fit.l1_norm();
            // Fits later on the path are better at the final penalty.
            let at_final = objective(&design, &x, &fit.coefficients, final_lambda);
            prop_assert!(at_final <= prev_obj + 1e-7 * prev_obj.max(1.0) || prev_obj.is_infinite());
            prev_obj = at_final;
        }
        prop_assert_eq!(path.entries[0].lambda, lambda_max(&design, &x));
        // A single coordinate-descent fit agrees with the path at the same penalty.
        let mid = &path.entries[path.len() / 2];
        let cd = fit(&LassoProblem::new(&design, &x, mid.lambda).unwrap(), None).unwrap();
        prop_assert!((cd.objective - mid.objective).abs() <= 1e-6 * mid.objective.max(1.0));
    }
}
