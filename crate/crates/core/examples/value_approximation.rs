//! First-order value approximation for a mixture utility, with the HJB
//! residual showing the error is second order in the time to horizon.

use horizon_approx::{hjb_residual, u1, u2, MarketModel, UtilitySpec, ValueHat, ValueSurrogate};

fn main() -> horizon_approx::Result<()> {
    let model = MarketModel::builtin_chacko_viceira(0.0811, 27.9345, 1.12, 0.5241, 0.0)?;
    let u = UtilitySpec::mixture(1.0, 2.0, 0.5, 4.0)?;
    let horizon = 1.0;
    let hat = ValueHat::new(u.clone(), model.clone(), horizon)?;
    let (x, y) = (1.5, 25.0);

    println!("u1 = {:.6e}, u2 = {:.6e}", u1(x, y, &u, &model)?, u2(x, y, &u, &model)?);
    println!("{:>8} {:>14} {:>14} {:>12}", "tau", "U_hat", "pi_hat", "residual");
    for tau in [0.4, 0.2, 0.1, 0.05, 0.025] {
        let t = horizon - tau;
        let v = hat.value(t, x, y)?;
        let pi = horizon_approx::pi_hat(t, x, y, &u, &model, horizon)?;
        let r = hjb_residual(&hat, t, x, y, &model)?;
        println!("{tau:>8.3} {v:>14.8} {pi:>14.8} {r:>12.3e}");
    }
    Ok(())
}
