//! One simulated year per preset region: wet-day share, amount scale and the
//! shape of `x` and `y`.

use sparse_tde::simulate::{simulate_pair, AmountModel, ImpulseSpec, RegionParams};

fn main() -> sparse_tde::error::Result<()> {
    let spec = ImpulseSpec::reference(37);
    println!("support [{}, {}), kappa = {}", spec.support_start, spec.support_end, spec.kappa());
    for region in RegionParams::presets() {
        let tm = region.transitions()?;
        for lambda in [0.125, 2.5] {
            let pair = simulate_pair(&spec, &tm, &AmountModel::Scenario { mean: lambda }, 1)?;
            let wet = pair.occurrences.iter().filter(|&&w| w).count();
            let zeros = pair.x.iter().filter(|&&v| v == 0.0).count();
            let peak = pair.x.iter().copied().fold(0.0, f64::max);
            println!(
                "{:>16} lambda {lambda:<5}: stationary wet {:.3}, wet days {wet:>3}, zeros in x {zeros:>3}, max x {peak:.2}, snr {:.0}",
                region.name,
                tm.stationary_wet().unwrap_or(0.0),
                spec.kappa() / lambda
            );
        }
    }
    Ok(())
}
