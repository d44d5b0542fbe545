//! Lagged association between an impulse and its delayed copy under the
//! three scalings.

use sparse_tde::assoc::{association_profile, LagGrid, ScalingMode};
use sparse_tde::signal::standardize;
use sparse_tde::simulate::{impulse, ImpulseSpec};
use sparse_tde::tde::argmax_lag;

fn main() -> sparse_tde::error::Result<()> {
    let (f, g) = impulse(&ImpulseSpec::reference(37))?;
    let x = standardize(&f)?;
    let y = standardize(&g)?;
    let grid = LagGrid::symmetric(x.len(), 146)?;
    for scaling in [ScalingMode::Unscaled, ScalingMode::Standard, ScalingMode::Trimmed] {
        let profile = association_profile(&x, &y, &grid, scaling)?;
        let (lag, gamma) = argmax_lag(&profile).expect("nonempty grid");
        println!("{scaling:>9}: peak at lag {lag:>4}, gamma = {gamma:.4}");
        for l in [-37, 0, 30, 37, 44] {
            println!("           gamma[{l:>3}] = {:+.4}", profile.get(l).unwrap());
        }
    }
    Ok(())
}
