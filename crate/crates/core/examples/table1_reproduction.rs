//! Coefficient table for power utility in the Chacko-Viceira model: the exact
//! value and allocation next to their first-order approximations.

use horizon_approx::{crra_exact_portfolio, crra_exact_value, pi_hat, value_hat, MarketModel, UtilitySpec};

fn main() -> horizon_approx::Result<()> {
    let (gamma, horizon, m) = (3.0, 2.0, 27.9345);
    let model = MarketModel::builtin_chacko_viceira(0.0811, m, 1.12, 0.5241, 0.0)?;
    let u = UtilitySpec::power(gamma)?;
    // U and π are multiples of x^(1-γ) and x, so x = 1 gives the coefficients.
    println!("{:>5} {:>14} {:>14} {:>10} {:>12} {:>12} {:>10}", "t", "U", "U_hat", "err", "pi", "pi_hat", "err");
    for t in [0.0, 0.5, 1.0, 1.5, 1.9, 1.99] {
        let ex = crra_exact_value(t, 1.0, m, gamma, &model, horizon)?;
        let hat = value_hat(t, 1.0, m, &u, &model, horizon)?.value;
        let pe = crra_exact_portfolio(t, 1.0, m, gamma, &model, horizon)?;
        let ph = pi_hat(t, 1.0, m, &u, &model, horizon)?;
        println!(
            "{t:>5.2} {ex:>14.8} {hat:>14.8} {:>10.2e} {pe:>12.8} {ph:>12.8} {:>10.2e}",
            (ex - hat).abs(),
            (pe - ph).abs()
        );
    }
    Ok(())
}
