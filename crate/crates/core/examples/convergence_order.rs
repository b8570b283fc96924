//! Log-log slope of the value error as the time to horizon shrinks.

use horizon_approx::{convergence_study, crra_exact_value, value_hat, MarketModel, UtilitySpec};

fn main() -> horizon_approx::Result<()> {
    let (gamma, horizon, y) = (3.0, 2.0, 27.9345);
    let model = MarketModel::builtin_chacko_viceira(0.0811, y, 1.12, 0.5241, 0.0)?;
    let u = UtilitySpec::power(gamma)?;
    let ts = [1.5, 1.6, 1.7, 1.8, 1.9, 1.95, 1.99];
    let err = |t: f64| {
        let ex = crra_exact_value(t, 1.0, y, gamma, &model, horizon)?;
        Ok((ex - value_hat(t, 1.0, y, &u, &model, horizon)?.value).abs())
    };
    let fit = convergence_study(err, &ts, horizon)?;
    for (tau, e) in fit.taus.iter().zip(&fit.errors) {
        println!("tau = {tau:.3}: error {e:.4e}");
    }
    println!("slope = {:.4}", fit.slope);
    Ok(())
}
