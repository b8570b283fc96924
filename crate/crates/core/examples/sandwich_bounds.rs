//! Sub- and super-solutions around the approximation, compared with the exact
//! value where the bounds are valid.

use horizon_approx::surrogate::DEFAULT_C2_MULTIPLIER;
use horizon_approx::{
    crra_exact_value, sandwich, GrowthCase, MarketModel, SandwichGrid, UtilitySpec, ValueHat, ValueSurrogate,
};

fn main() -> horizon_approx::Result<()> {
    let (gamma, horizon) = (3.0, 2.0);
    let model = MarketModel::builtin_chacko_viceira(0.0811, 27.9345, 1.12, 0.5241, 0.0)?;
    let u = UtilitySpec::power(gamma)?;
    let grid = SandwichGrid {
        xs: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        ys: (1..=10).map(|i| 5.0 * i as f64).collect(),
        taus: (1..=99).map(|i| i as f64 / 100.0).collect(),
    };
    let sb = sandwich(&u, &model, horizon, GrowthCase::case2(gamma, gamma)?, &grid, DEFAULT_C2_MULTIPLIER)?;
    println!("c2 = {:.4}, delta = {:?}", sb.c2, sb.delta);

    let hat = ValueHat::new(u, model.clone(), horizon)?;
    let (x, y) = (1.0, 27.9345);
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "tau", "lower", "exact", "upper", "|U - U_hat|");
    for tau in [0.5, 0.25, 0.1, 0.01] {
        let t = horizon - tau;
        let lo = sb.lower.value(t, x, y)?;
        let up = sb.upper.value(t, x, y)?;
        let ex = crra_exact_value(t, x, y, gamma, &model, horizon)?;
        let err = (ex - hat.value(t, x, y)?).abs();
        println!("{tau:>6.2} {lo:>12.6} {ex:>12.6} {up:>12.6} {err:>12.3e}");
    }
    Ok(())
}
