//! Growth-condition checks for the built-in utilities and a custom one.

use horizon_approx::utility::GrowthGrid;
use horizon_approx::{check_growth_conditions, GrowthCase, UtilitySpec};

fn report(u: &UtilitySpec, case: GrowthCase) -> horizon_approx::Result<()> {
    let rep = check_growth_conditions(u, case, &GrowthGrid::default(), 1e-8)?;
    println!("{} ({case:?}): {}", u.label(), if rep.pass { "satisfied" } else { "violated" });
    for r in &rep.ratios {
        println!("  k = {}: inf {:.4e}, sup {:.4e}", r.order, r.inf, r.sup);
    }
    Ok(())
}

fn main() -> horizon_approx::Result<()> {
    for u in [UtilitySpec::power(3.0)?, UtilitySpec::log(), UtilitySpec::mixture(1.0, 2.0, 1.0, 4.0)?] {
        report(&u, u.natural_growth_case().expect("built-in families have a natural case"))?;
    }
    // Exponential utility decays too fast in x for any of the cases.
    report(&UtilitySpec::exponential(1.0)?, GrowthCase::case2(3.0, 3.0)?)?;
    Ok(())
}
