//! Yearly delay estimates for a few simulated pixels, summarized by the
//! median and robust sd of the significant years.

use sparse_tde::signal::standardize;
use sparse_tde::simulate::{replicate_rng, simulate_pair_with, ImpulseSpec, RegionParams};
use sparse_tde::tde::{aggregate_years, estimate_delay, restrict_grid, EstimatorSpec};

fn main() -> sparse_tde::error::Result<()> {
    let region = RegionParams::preset("interior-plains").unwrap();
    let tm = region.transitions()?;
    let amounts = region.monthly_amounts();
    let grid = restrict_grid(366, 0.4)?;
    for (pixel, tau) in [(1, 28), (2, 37), (3, 45)] {
        let spec = ImpulseSpec::reference(tau);
        let mut years = Vec::new();
        for year in 0..14 {
            let mut rng = replicate_rng(pixel, year);
            let pair = simulate_pair_with(&spec, &tm, &amounts, &mut rng)?;
            let x = standardize(&pair.x)?;
            let y = standardize(&pair.y)?;
            years.push(estimate_delay(&x, &y, &grid, EstimatorSpec::pn())?);
        }
        let s = aggregate_years(&years, 0.05);
        let lags: Vec<i64> = years.iter().map(|r| r.lag_hat).collect();
        println!("pixel {pixel} (true {tau}): yearly lags {lags:?}");
        println!(
            "  significant {:.0}%  median {:?}  robust sd {:?}",
            100.0 * s.significant_fraction,
            s.median_lag,
            s.robust_sd
        );
    }
    Ok(())
}
