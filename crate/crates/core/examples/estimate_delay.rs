//! All seven estimators on one simulated pair.

use sparse_tde::signal::standardize;
use sparse_tde::simulate::{simulate_pair, AmountModel, ImpulseSpec, RegionParams};
use sparse_tde::tde::{estimate_many, restrict_grid, EstimatorSpec, PathSettings};

fn main() -> sparse_tde::error::Result<()> {
    let tau = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(110);
    let region = RegionParams::preset("mezquital").unwrap();
    let pair = simulate_pair(
        &ImpulseSpec::reference(tau),
        &region.transitions()?,
        &AmountModel::Scenario { mean: 2.5 },
        2024,
    )?;
    let x = standardize(&pair.x)?;
    let y = standardize(&pair.y)?;
    let grid = restrict_grid(x.len(), 0.4)?;
    println!("true delay {tau}, grid half-width {}", grid.lags().last().unwrap());
    let specs = EstimatorSpec::all();
    for (spec, r) in specs.iter().zip(estimate_many(&x, &y, &grid, &specs, PathSettings::default())) {
        match r {
            Ok(r) => println!(
                "{:>14}: lag {:>4}  gamma {:+.3}  p {:.2e}{}",
                spec.to_string(),
                r.lag_hat,
                r.gamma_at_lag,
                r.p_value,
                r.lambda.map(|l| format!("  lambda {l:.3}")).unwrap_or_default()
            ),
            Err(e) => println!("{:>14}: failed ({e})", spec.to_string()),
        }
    }
    Ok(())
}
