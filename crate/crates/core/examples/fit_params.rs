//! Simulate a long rainfall record from known parameters, fit them back, and
//! print the recovered region file.

use rand::Rng;
use sparse_tde::simulate::{
    draw_occurrences, fit_region_params, month_of_day, replicate_rng, RegionFile, RegionParams,
};

fn main() -> sparse_tde::error::Result<()> {
    let truth = RegionParams::preset("plateau-plains").unwrap();
    let tm = truth.transitions()?;
    let mut rng = replicate_rng(11, 0);
    let n = 366 * 40;
    let wet = draw_occurrences(&tm, n, &mut rng);
    let days: Vec<i64> = (1..=n as i64).collect();
    let precip: Vec<f64> = days
        .iter()
        .zip(&wet)
        .map(|(&d, &w)| {
            if w {
                let u: f64 = rng.random();
                -(1.0 - u).ln() / truth.monthly_rates[month_of_day(d)]
            } else {
                0.0
            }
        })
        .collect();
    let fitted = fit_region_params("refit", &days, &precip)?;
    println!("p_dry_wet  true {:.4}  fitted {:.4}", truth.p_dry_wet, fitted.p_dry_wet);
    println!("p_wet_dry  true {:.4}  fitted {:.4}", truth.p_wet_dry, fitted.p_wet_dry);
    for m in 0..12 {
        println!(
            "month {:>2}  rate true {:.3}  fitted {:.3}",
            m + 1,
            truth.monthly_rates[m],
            fitted.monthly_rates[m]
        );
    }
    println!("\n{}", RegionFile { region: vec![fitted] }.to_toml());
    Ok(())
}
