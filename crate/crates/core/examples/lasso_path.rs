//! Lasso path of `x` on the shifted copies of `y`, with the penalty chosen by
//! the path quantile and by cross-validation.

use sparse_tde::assoc::ShiftMatrix;
use sparse_tde::lasso::{kkt_violation, select_lambda, solution_path, Folds, LambdaSelection};
use sparse_tde::signal::standardize;
use sparse_tde::simulate::{simulate_pair, ImpulseSpec, RegionParams};
use sparse_tde::simulate::AmountModel;

fn main() -> sparse_tde::error::Result<()> {
    let region = RegionParams::preset("madrense").unwrap();
    let pair = simulate_pair(
        &ImpulseSpec::reference(37),
        &region.transitions()?,
        &AmountModel::Scenario { mean: 0.5 },
        7,
    )?;
    let x = standardize(&pair.x)?;
    let y = standardize(&pair.y)?;
    let design = ShiftMatrix::new(&y);
    let path = solution_path(&design, &x, 100, 1e-3)?;

    println!("{:>12} {:>6} {:>12} {:>10}", "lambda", "nnz", "objective", "kkt");
    for fit in path.entries.iter().step_by(11) {
        let kkt = kkt_violation(&design, &x, &fit.coefficients, fit.lambda);
        println!("{:>12.4} {:>6} {:>12.4} {:>10.2e}", fit.lambda, fit.nonzero_count, fit.objective, kkt);
    }

    for rule in [
        LambdaSelection::QuantileOfPath(0.1),
        LambdaSelection::CrossValidation(Folds::K(10)),
    ] {
        let lambda = select_lambda(&path, rule, &design, &x)?;
        let fit = path.fit_at(lambda).unwrap();
        let strongest = fit
            .coefficients
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(j, c)| (design.lag_of(j), *c))
            .unwrap();
        println!(
            "{rule:?}: lambda = {lambda:.4}, {} active lags, largest coefficient at lag {} ({:.3})",
            fit.nonzero_count, strongest.0, strongest.1
        );
    }
    Ok(())
}
