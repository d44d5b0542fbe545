//! A small Monte Carlo grid rendered as the mean/sd and MSE tables.
//!
//! `cargo run --release --example bench_table -- 50` sets the replicate count.

use sparse_tde::bench::{emit_table, run_scenario, ScenarioConfig, TableFormat, TableKind};
use sparse_tde::simulate::RegionParams;
use sparse_tde::tde::EstimatorSpec;

fn main() -> sparse_tde::error::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut results = Vec::new();
    for tau in [37, 110] {
        for lambda in [0.125, 2.5] {
            let mut cfg = ScenarioConfig::new(RegionParams::preset("madrense").unwrap(), tau, lambda);
            cfg.reps = reps;
            cfg.estimators = vec![EstimatorSpec::pn(), EstimatorSpec::pn_trim(), EstimatorSpec::lasso_cv(true)];
            eprintln!("tau {tau} lambda {lambda}");
            results.push(run_scenario(&cfg)?);
        }
    }
    println!("{}", emit_table(&results, TableKind::MeanSd, TableFormat::Markdown));
    println!("{}", emit_table(&results, TableKind::Mse, TableFormat::Markdown));
    print!("{}", emit_table(&results, TableKind::MeanSd, TableFormat::Csv));
    Ok(())
}
