//! Piecewise scheme on refined partitions, compared with the exact value and
//! allocation and with the Merton allocation at the current volatility.

use horizon_approx::oracle::{merton_portfolio, MertonParams};
use horizon_approx::{
    crra_exact_portfolio, crra_exact_value, MarketModel, Partition, PartialsMode, SchemeSurrogate, UtilitySpec,
    ValueSurrogate,
};

fn main() -> horizon_approx::Result<()> {
    let (gamma, horizon, y) = (3.0, 2.0, 27.9345);
    let model = MarketModel::builtin_chacko_viceira(0.0811, y, 1.12, 0.5241, 0.0)?;
    let u = UtilitySpec::power(gamma)?;
    let (t, x) = (0.0, 1.0);

    let exact = crra_exact_value(t, x, y, gamma, &model, horizon)?;
    let pi_exact = crra_exact_portfolio(t, x, y, gamma, &model, horizon)?;
    let pi_merton = merton_portfolio(x, &MertonParams::frozen(gamma, &model, y, horizon)?)?;
    println!("exact U = {exact:.8}, pi = {pi_exact:.6}, Merton pi = {pi_merton:.6}");

    for n in [1, 2, 4] {
        let p = Partition::uniform(horizon, n)?;
        for mode in [PartialsMode::FullExpression, PartialsMode::AnchorOnly] {
            let s = SchemeSurrogate::new(u.clone(), model.clone(), p.clone()).with_mode(mode);
            let v = s.value(t, x, y)?;
            let pi = s.portfolio(t, x, y)?;
            println!(
                "n = {n} {mode:?}: U err {:.3e}, pi = {pi:.6} (err {:.3e})",
                (v - exact).abs(),
                (pi - pi_exact).abs()
            );
        }
    }
    Ok(())
}
