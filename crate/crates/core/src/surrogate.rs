//! First-order small-time value approximation and everything built on it.
//!
//! With `τ = T - t` and `q(x) = U_T'(x)² / U_T''(x)` the approximation reads
//!
//! ```text
//! Û(t, x, y) = U_T(x) + τ u₁(x, y),      u₁ = -λ²(y) q(x) / 2
//! ```
//!
//! and the second-order coefficient `u₂` (eight product terms `a₁..a₈`) sizes
//! the sub- and super-solutions `Û ∓ c₂ τ² h(x)`. The portfolio formula and the
//! HJB residual are shared by every [`ValueSurrogate`].

use crate::error::{Error, Result};
use crate::market::{FactorCoefficients, MarketModel};
use crate::utility::{GrowthCase, UtilitySpec};

/// Value and the partial derivatives entering the HJB equation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValuePartials {
    pub value: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    UHat,
    Sub,
    Super,
    Oracle,
    Scheme,
}

/// Anything mapping `(t, x, y)` to a value and its partials.
pub trait ValueSurrogate: Send + Sync {
    fn kind(&self) -> SurrogateKind;

    fn horizon(&self) -> f64;

    fn partials(&self, t: f64, x: f64, y: f64) -> Result<ValuePartials>;

    fn value(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.partials(t, x, y)?.value)
    }
}

pub(crate) fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("time t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Utility derivatives `U', U'', U''', U''''` with the `U'' ≠ 0` check.
fn utility_derivs(u: &UtilitySpec, x: f64) -> Result<[f64; 5]> {
    let d = u.derivatives(4, x)?;
    if d[2] == 0.0 {
        return Err(Error::Singularity(format!("U_T''({x}) = 0")));
    }
    Ok([d[0], d[1], d[2], d[3], d[4]])
}

/// `u₁(x, y) = -λ²(y)/2 · U_T'(x)² / U_T''(x)`.
pub fn u1(x: f64, y: f64, u: &UtilitySpec, model: &MarketModel) -> Result<f64> {
    let d1 = u.derivative(1, x)?;
    let d2 = u.derivative(2, x)?;
    if d2 == 0.0 {
        return Err(Error::Singularity(format!("U_T''({x}) = 0")));
    }
    let lam = model.lambda(y)?;
    Ok(-0.5 * lam * lam * d1 * d1 / d2)
}

/// The eight product terms of the second-order coefficient, in the order
/// they appear when both brackets are expanded: five from the `U'²/U''`
/// bracket, then three from the `U'³/U''³` bracket.
pub fn u2_terms(x: f64, y: f64, u: &UtilitySpec, model: &MarketModel) -> Result<[f64; 8]> {
    let [_, d1, d2, d3, d4] = utility_derivs(u, x)?;
    let k = model.coefficients(y)?;
    Ok(u2_terms_from(d1, d2, d3, d4, &k, model.rho()))
}

fn u2_terms_from(d1: f64, d2: f64, d3: f64, d4: f64, k: &FactorCoefficients, rho: f64) -> [f64; 8] {
    let q = d1 * d1 / d2;
    let p = q * d1 / (d2 * d2);
    let (l, lp, lpp) = (k.lambda, k.lambda_y, k.lambda_yy);
    let l2 = l * l;
    let l4 = l2 * l2;
    [
        q * l4 / 4.0,
        -q * k.b * l * lp / 2.0,
        q * rho * k.a * l2 * lp,
        -q * k.a * k.a * lp * lp / 4.0,
        -q * k.a * k.a * l * lpp / 4.0,
        -p * rho * k.a * l2 * lp * d3 / 2.0,
        -p * l4 * d1 * d3 * d3 / (4.0 * d2 * d2),
        p * l4 * d1 * d4 / (8.0 * d2),
    ]
}

/// Second-order coefficient `u₂ = a₁ + … + a₈`.
pub fn u2(x: f64, y: f64, u: &UtilitySpec, model: &MarketModel) -> Result<f64> {
    Ok(u2_terms(x, y, u, model)?.iter().sum())
}

/// The first-order approximation `Û` with analytic partials.
#[derive(Debug, Clone)]
pub struct ValueHat {
    u: UtilitySpec,
    model: MarketModel,
    horizon: f64,
}

impl ValueHat {
    pub fn new(u: UtilitySpec, model: MarketModel, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self { u, model, horizon })
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.u
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }
}

impl ValueSurrogate for ValueHat {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::UHat
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn partials(&self, t: f64, x: f64, y: f64) -> Result<ValuePartials> {
        check_time(t, self.horizon)?;
        let tau = self.horizon - t;
        let [d0, d1, d2, d3, d4] = utility_derivs(&self.u, x)?;
        let k = self.model.coefficients(y)?;

        // q = U'^2/U'' and its first two wealth derivatives
        let q = d1 * d1 / d2;
        let q_x = 2.0 * d1 - d1 * d1 * d3 / (d2 * d2);
        let q_xx = 2.0 * d2 - 2.0 * d1 * d3 / d2 - d1 * d1 * d4 / (d2 * d2)
            + 2.0 * d1 * d1 * d3 * d3 / (d2 * d2 * d2);

        let l = k.lambda;
        let half_l2 = 0.5 * l * l;
        let ll_y = l * k.lambda_y;
        Ok(ValuePartials {
            value: d0 - tau * half_l2 * q,
            t: half_l2 * q,
            x: d1 - tau * half_l2 * q_x,
            xx: d2 - tau * half_l2 * q_xx,
            y: -tau * ll_y * q,
            xy: -tau * ll_y * q_x,
            yy: -tau * (k.lambda_y * k.lambda_y + l * k.lambda_yy) * q,
        })
    }
}

/// Partials of `Û` at one point.
pub fn value_hat(
    t: f64,
    x: f64,
    y: f64,
    u: &UtilitySpec,
    model: &MarketModel,
    horizon: f64,
) -> Result<ValuePartials> {
    ValueHat::new(u.clone(), model.clone(), horizon)?.partials(t, x, y)
}

/// `U_t - ½(λU_x + ρaU_xy)²/U_xx + ½a²U_yy + bU_y` from given partials.
pub fn residual_from_partials(p: &ValuePartials, model: &MarketModel, y: f64) -> Result<f64> {
    if p.xx == 0.0 {
        return Err(Error::Singularity("U_xx = 0 in the HJB residual".into()));
    }
    let lam = model.lambda(y)?;
    let a = model.a(y)?;
    let b = model.b(y)?;
    let num = lam * p.x + model.rho() * a * p.xy;
    Ok(p.t - 0.5 * num * num / p.xx + 0.5 * a * a * p.yy + b * p.y)
}

/// HJB residual of a surrogate at `(t, x, y)`.
pub fn hjb_residual(s: &dyn ValueSurrogate, t: f64, x: f64, y: f64, model: &MarketModel) -> Result<f64> {
    residual_from_partials(&s.partials(t, x, y)?, model, y)
}

/// Left-hand side of the HJB equation before maximizing, at allocation `pi`.
pub fn hamiltonian(p: &ValuePartials, model: &MarketModel, y: f64, pi: f64) -> Result<f64> {
    let k = model.coefficients(y)?;
    Ok(p.t
        + 0.5 * k.sigma * k.sigma * pi * pi * p.xx
        + pi * (k.sigma * k.lambda * p.x + model.rho() * k.sigma * k.a * p.xy)
        + 0.5 * k.a * k.a * p.yy
        + k.b * p.y)
}

/// Maximizing allocation `(-λU_x - ρaU_xy)/(σU_xx)`.
pub fn pi_from_partials(p: &ValuePartials, model: &MarketModel, y: f64) -> Result<f64> {
    if !(p.xx < 0.0) {
        return Err(Error::NonConcave(format!("U_xx = {} at y = {y}", p.xx)));
    }
    let k = model.coefficients(y)?;
    Ok((-k.lambda * p.x - model.rho() * k.a * p.xy) / (k.sigma * p.xx))
}

/// Near-optimal allocation generated by `Û`.
pub fn pi_hat(
    t: f64,
    x: f64,
    y: f64,
    u: &UtilitySpec,
    model: &MarketModel,
    horizon: f64,
) -> Result<f64> {
    let p = value_hat(t, x, y, u, model, horizon)?;
    pi_from_partials(&p, model, y)
}

/// `Û ∓ c₂ τ² h(x)`.
#[derive(Debug, Clone)]
pub struct BoundSurrogate {
    hat: ValueHat,
    c2: f64,
    sign: f64,
    case: GrowthCase,
}

impl BoundSurrogate {
    pub fn is_upper(&self) -> bool {
        self.sign > 0.0
    }
}

impl ValueSurrogate for BoundSurrogate {
    fn kind(&self) -> SurrogateKind {
        if self.sign > 0.0 {
            SurrogateKind::Super
        } else {
            SurrogateKind::Sub
        }
    }

    fn horizon(&self) -> f64 {
        self.hat.horizon
    }

    fn partials(&self, t: f64, x: f64, y: f64) -> Result<ValuePartials> {
        let mut p = self.hat.partials(t, x, y)?;
        let tau = self.hat.horizon - t;
        let w = self.sign * self.c2;
        let h = self.case.h(x);
        let (h_x, h_xx) = self.case.h_derivatives(x);
        p.value += w * tau * tau * h;
        p.t -= 2.0 * w * tau * h;
        p.x += w * tau * tau * h_x;
        p.xx += w * tau * tau * h_xx;
        Ok(p)
    }
}

/// Evaluation region for estimating `c₂` and the validity window `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Candidate times to horizon, tested in increasing order.
    pub taus: Vec<f64>,
}

/// Default hedge applied to the grid supremum entering `c₂`.
pub const DEFAULT_C2_MULTIPLIER: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct SandwichBounds {
    pub c2: f64,
    /// Largest tested `T - t` up to which every smaller tested value kept the
    /// sub-solution residual positive and the super-solution residual
    /// negative; `None` when not even the smallest candidate did.
    pub delta: Option<f64>,
    /// Grid suprema of `|aᵢ| / h`.
    pub sup_ratios: [f64; 8],
    pub case: GrowthCase,
    pub lower: BoundSurrogate,
    pub upper: BoundSurrogate,
}

impl SandwichBounds {
    /// Error bound `c₂ τ² h(x)`.
    pub fn error_bound(&self, tau: f64, x: f64) -> f64 {
        self.c2 * tau * tau * self.case.h(x)
    }
}

/// Builds the sub- and super-solutions around `Û`.
///
/// `c₂ = 8 · multiplier · max_i sup |aᵢ|/h + 1` with the supremum taken over
/// `grid.xs × grid.ys`.
pub fn sandwich(
    u: &UtilitySpec,
    model: &MarketModel,
    horizon: f64,
    case: GrowthCase,
    grid: &SandwichGrid,
    multiplier: f64,
) -> Result<SandwichBounds> {
    check_horizon(horizon)?;
    if grid.xs.is_empty() || grid.ys.is_empty() {
        return Err(Error::InvalidParameter("sandwich grid must be nonempty".into()));
    }
    if !(multiplier >= 1.0) {
        return Err(Error::InvalidParameter(format!("c2 multiplier must be >= 1, got {multiplier}")));
    }
    let mut sup_ratios = [0.0f64; 8];
    for &x in &grid.xs {
        let h = case.h(x);
        for &y in &grid.ys {
            let terms = u2_terms(x, y, u, model)?;
            for (s, a) in sup_ratios.iter_mut().zip(terms) {
                *s = s.max(a.abs() / h);
            }
        }
    }
    let max_sup = sup_ratios.iter().cloned().fold(0.0, f64::max);
    let c2 = 8.0 * multiplier * max_sup + 1.0;

    let hat = ValueHat::new(u.clone(), model.clone(), horizon)?;
    let lower = BoundSurrogate {
        hat: hat.clone(),
        c2,
        sign: -1.0,
        case,
    };
    let upper = BoundSurrogate {
        hat,
        c2,
        sign: 1.0,
        case,
    };

    let mut taus: Vec<f64> = grid
        .taus
        .iter()
        .cloned()
        .filter(|&tau| tau > 0.0 && tau < horizon.min(1.0))
        .collect();
    taus.sort_by(f64::total_cmp);
    let mut delta = None;
    'outer: for &tau in &taus {
        let t = horizon - tau;
        for &x in &grid.xs {
            for &y in &grid.ys {
                let lo = hjb_residual(&lower, t, x, y, model);
                let up = hjb_residual(&upper, t, x, y, model);
                let ok = matches!(lo, Ok(r) if r > 0.0) && matches!(up, Ok(r) if r < 0.0);
                if !ok {
                    break 'outer;
                }
            }
        }
        delta = Some(tau);
    }

    Ok(SandwichBounds {
        c2,
        delta,
        sup_ratios,
        case,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{linspace, logspace};
    use approx::assert_relative_eq;

    const Y0: f64 = 27.9345;

    fn reference_model() -> MarketModel {
        MarketModel::builtin_chacko_viceira(0.0811, 27.9345, 1.12, 0.5241, 0.0).unwrap()
    }

    fn power3() -> UtilitySpec {
        UtilitySpec::power(3.0).unwrap()
    }

    #[test]
    fn u1_examples() {
        let m = reference_model();
        let lam2 = m.lambda(Y0).unwrap().powi(2);
        for &x in &[0.3, 1.0, 7.0] {
            assert_relative_eq!(u1(x, Y0, &UtilitySpec::log(), &m).unwrap(), lam2 / 2.0, max_relative = 1e-14);
        }
        assert_relative_eq!(u1(1.0, Y0, &power3(), &m).unwrap(), lam2 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(u1(1.0, Y0, &power3(), &m).unwrap(), 0.0306219, max_relative = 1e-5);
        let flat = MarketModel::builtin_constant(0.05, 0.2, 0.0, 0.3, 0.4, 0.05).unwrap();
        assert_eq!(u1(2.0, 0.0, &power3(), &flat).unwrap(), 0.0);
    }

    #[test]
    fn u2_vanishes_for_log_constant_and_zero_lambda() {
        let m = MarketModel::builtin_constant(0.1, 0.2, 0.3, 0.4, 0.5, 0.0).unwrap();
        for &x in &logspace(0.01, 100.0, 30) {
            assert!(u2(x, 0.0, &UtilitySpec::log(), &m).unwrap().abs() < 1e-12);
        }
        let flat = MarketModel::builtin_constant(0.05, 0.2, 0.3, 0.4, 0.5, 0.05).unwrap();
        assert_eq!(u2(1.3, 0.0, &power3(), &flat).unwrap(), 0.0);
    }

    #[test]
    fn u2_reference_model_matches_symbolic_oracle() {
        // Term-by-term symbolic evaluation (exact rational arithmetic).
        let expected = [
            -0.0028130922576690402,
            0.0,
            -0.0014577545208427749,
            0.00017188442133333333,
            -0.00017188442133333333,
            0.00097183634722851662,
            0.0050010529025227380,
            -0.0031256580640767113,
        ];
        let terms = u2_terms(1.0, Y0, &power3(), &reference_model()).unwrap();
        for (got, want) in terms.iter().zip(expected) {
            assert!((got - want).abs() <= 1e-13 * want.abs().max(1e-3), "{got} vs {want}");
        }
        assert_relative_eq!(
            u2(1.0, Y0, &power3(), &reference_model()).unwrap(),
            -0.0014236155928372717,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            u2(1.5, 20.0, &power3(), &reference_model()).unwrap(),
            0.0015645975917189373,
            max_relative = 1e-12
        );
    }

    #[test]
    fn value_hat_terminal_and_table_values() {
        let m = reference_model();
        for u in [power3(), UtilitySpec::log(), UtilitySpec::mixture(1.0, 0.5, 2.0, 3.0).unwrap()] {
            for &x in &[0.2, 1.0, 5.0] {
                let p = value_hat(2.0, x, Y0, &u, &m, 2.0).unwrap();
                assert_eq!(p.value, u.value(x).unwrap());
                assert_eq!((p.y, p.xy, p.yy), (0.0, 0.0, 0.0));
            }
        }
        let p = value_hat(1.5, 1.0, Y0, &power3(), &m, 2.0).unwrap();
        assert_relative_eq!(p.value, -0.484689, max_relative = 1e-6);
        let p = value_hat(1.9, 1.0, Y0, &power3(), &m, 2.0).unwrap();
        assert_relative_eq!(p.value, -0.496938, max_relative = 1e-6);
        // 1/x^2 shape
        let p2 = value_hat(1.9, 2.0, Y0, &power3(), &m, 2.0).unwrap();
        assert_relative_eq!(p2.value * 4.0, p.value, max_relative = 1e-13);
        assert!(value_hat(2.5, 1.0, Y0, &power3(), &m, 2.0).is_err());
    }

    fn fd_partials(s: &dyn ValueSurrogate, t: f64, x: f64, y: f64) -> ValuePartials {
        let f = |t: f64, x: f64, y: f64| s.value(t, x, y).unwrap();
        let (ht, hx, hy) = (1e-4, 1e-4 * x, 1e-4 * y);
        let (hx2, hy2) = (1e-3 * x, 1e-3 * y);
        ValuePartials {
            value: f(t, x, y),
            t: (f(t + ht, x, y) - f(t - ht, x, y)) / (2.0 * ht),
            x: (f(t, x + hx, y) - f(t, x - hx, y)) / (2.0 * hx),
            y: (f(t, x, y + hy) - f(t, x, y - hy)) / (2.0 * hy),
            xx: (f(t, x + hx2, y) - 2.0 * f(t, x, y) + f(t, x - hx2, y)) / (hx2 * hx2),
            yy: (f(t, x, y + hy2) - 2.0 * f(t, x, y) + f(t, x, y - hy2)) / (hy2 * hy2),
            xy: (f(t, x + hx2, y + hy2) - f(t, x + hx2, y - hy2) - f(t, x - hx2, y + hy2)
                + f(t, x - hx2, y - hy2))
                / (4.0 * hx2 * hy2),
        }
    }

    fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale)
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let m = reference_model();
        for u in [power3(), UtilitySpec::log(), UtilitySpec::mixture(1.0, 0.5, 2.0, 3.0).unwrap()] {
            let hat = ValueHat::new(u.clone(), m.clone(), 2.0).unwrap();
            for &t in &[0.5, 1.2, 1.9] {
                for &x in &[0.5, 1.0, 2.5] {
                    for &y in &[10.0, 27.9345, 40.0] {
                        let a = hat.partials(t, x, y).unwrap();
                        let n = fd_partials(&hat, t, x, y);
                        let s = 1e-6 * a.value.abs().max(1.0);
                        for (name, p, q) in [
                            ("t", a.t, n.t),
                            ("x", a.x, n.x),
                            ("y", a.y, n.y),
                            ("xx", a.xx, n.xx),
                            ("xy", a.xy, n.xy),
                            ("yy", a.yy, n.yy),
                        ] {
                            assert!(close(p, q, s, 1e-5), "{} {name} at ({t},{x},{y}): {p} vs {q}", u.label());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residual_log_constant_is_zero() {
        let m = MarketModel::builtin_constant(0.1, 0.2, 0.3, 0.4, 0.5, 0.0).unwrap();
        let hat = ValueHat::new(UtilitySpec::log(), m.clone(), 1.0).unwrap();
        for &t in &[0.0, 0.4, 0.99] {
            for &x in &[0.1, 1.0, 10.0] {
                let r = hjb_residual(&hat, t, x, 0.0, &m).unwrap();
                assert!(r.abs() < 1e-15, "{r}");
            }
        }
    }

    #[test]
    fn residual_at_horizon_cancels() {
        let m = reference_model();
        for u in [power3(), UtilitySpec::log(), UtilitySpec::mixture(1.0, 0.5, 2.0, 3.0).unwrap()] {
            let hat = ValueHat::new(u, m.clone(), 2.0).unwrap();
            for &x in &[0.5, 1.0, 3.0] {
                let p = hat.partials(2.0, x, 20.0).unwrap();
                let r = residual_from_partials(&p, &m, 20.0).unwrap();
                assert!(r.abs() <= 1e-14 * p.t.abs().max(1e-300), "{r}");
            }
        }
    }

    #[test]
    fn residual_leading_order_is_twice_u2() {
        // Û leaves residual 2 τ u₂ + O(τ²); checks u₂ against the residual route.
        let m = reference_model();
        for u in [power3(), UtilitySpec::log(), UtilitySpec::mixture(1.0, 0.5, 2.0, 3.0).unwrap()] {
            let hat = ValueHat::new(u.clone(), m.clone(), 2.0).unwrap();
            for &(x, y) in &[(1.0, Y0), (1.3, 20.0), (0.6, 35.0)] {
                let target = 2.0 * u2(x, y, &u, &m).unwrap();
                let r1 = hjb_residual(&hat, 2.0 - 1e-3, x, y, &m).unwrap() / 1e-3;
                let r2 = hjb_residual(&hat, 2.0 - 5e-4, x, y, &m).unwrap() / 5e-4;
                // Richardson: remove the O(τ) term of residual/τ
                let extrapolated = 2.0 * r2 - r1;
                assert!((extrapolated - target).abs() < 1e-6 * target.abs().max(1e-3), "{} {extrapolated} vs {target}", u.label());
            }
        }
    }

    #[test]
    fn residual_decays_with_order_two() {
        let m = reference_model();
        let hat = ValueHat::new(power3(), m.clone(), 2.0).unwrap();
        let ratios: Vec<f64> = [0.5, 0.2, 0.1, 0.05, 0.01, 0.001]
            .iter()
            .map(|&tau| (hjb_residual(&hat, 2.0 - tau, 1.0, Y0, &m).unwrap() / tau).abs())
            .collect();
        let bound = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(bound < 0.01, "{ratios:?}");
    }

    #[test]
    fn pi_from_partials_examples() {
        let m = MarketModel::builtin_constant(0.1, 0.2, 0.0, 0.3, 0.5, 0.0).unwrap();
        // power utility shape: U_x/U_xx = -x/γ, U_xy = 0
        let gamma = 3.0;
        let x = 2.0;
        let p = ValuePartials {
            x: 1.0,
            xx: -gamma / x,
            ..Default::default()
        };
        assert_relative_eq!(pi_from_partials(&p, &m, 0.0).unwrap(), 0.5 * x / (0.2 * gamma), max_relative = 1e-14);

        let m0 = MarketModel::builtin_constant(0.1, 0.2, 0.0, 0.3, 0.0, 0.0).unwrap();
        let p_xy = ValuePartials { xy: 123.0, ..p };
        assert_eq!(pi_from_partials(&p_xy, &m0, 0.0).unwrap(), pi_from_partials(&p, &m0, 0.0).unwrap());

        let flat = ValuePartials { xx: 0.0, ..p };
        assert!(matches!(pi_from_partials(&flat, &m, 0.0), Err(Error::NonConcave(_))));
        assert!(matches!(residual_from_partials(&flat, &m, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn pi_hat_examples() {
        let m = reference_model();
        for &y in &[5.0, Y0, 50.0] {
            for &x in &[0.5, 2.0] {
                let pi = pi_hat(1.0, x, y, &UtilitySpec::log(), &m, 2.0).unwrap();
                let myopic = m.lambda(y).unwrap() * x / m.sigma(y).unwrap();
                assert!((pi - myopic).abs() <= 1e-12 * myopic.abs());
            }
        }
        assert_relative_eq!(pi_hat(1.5, 1.0, Y0, &power3(), &m, 2.0).unwrap(), 0.748982, max_relative = 1e-6);
        assert_relative_eq!(pi_hat(1.9, 1.0, Y0, &power3(), &m, 2.0).unwrap(), 0.753957, max_relative = 1e-6);
        assert_relative_eq!(pi_hat(1.9, 3.0, Y0, &power3(), &m, 2.0).unwrap(), 3.0 * 0.753957, max_relative = 1e-6);
    }

    #[test]
    fn hamiltonian_is_maximized_by_pi_hat() {
        let m = reference_model();
        let hat = ValueHat::new(power3(), m.clone(), 2.0).unwrap();
        for &t in &[1.0, 1.5, 1.9] {
            for &x in &[0.5, 1.0, 2.0] {
                for &y in &[15.0, Y0, 40.0] {
                    let p = hat.partials(t, x, y).unwrap();
                    let pi = pi_from_partials(&p, &m, y).unwrap();
                    let h0 = hamiltonian(&p, &m, y, pi).unwrap();
                    for eps in [1e-3, 1e-2, -1e-3, -1e-2] {
                        assert!(h0 >= hamiltonian(&p, &m, y, pi + eps).unwrap());
                    }
                    // the maximum equals the residual
                    let r = residual_from_partials(&p, &m, y).unwrap();
                    assert!((h0 - r).abs() <= 1e-12 * p.t.abs().max(r.abs()));
                }
            }
        }
    }

    #[test]
    fn sandwich_zero_lambda_log() {
        let m = MarketModel::builtin_constant(0.05, 0.2, 0.0, 0.3, 0.0, 0.05).unwrap();
        let grid = SandwichGrid {
            xs: logspace(0.1, 10.0, 20),
            ys: vec![0.0],
            taus: linspace(0.05, 0.95, 19),
        };
        let sb = sandwich(&UtilitySpec::log(), &m, 2.0, GrowthCase::Case1, &grid, DEFAULT_C2_MULTIPLIER).unwrap();
        assert_eq!(sb.c2, 1.0);
        for &x in &[0.5, 2.0] {
            let tau = 0.3;
            let lo = sb.lower.value(2.0 - tau, x, 0.0).unwrap();
            let up = sb.upper.value(2.0 - tau, x, 0.0).unwrap();
            assert_relative_eq!(lo, x.ln() - tau * tau, max_relative = 1e-14);
            assert_relative_eq!(up, x.ln() + tau * tau, max_relative = 1e-14);
        }
    }

    #[test]
    fn sandwich_reference_model() {
        let m = reference_model();
        let case = GrowthCase::case2(3.0, 3.0).unwrap();
        let grid = SandwichGrid {
            xs: logspace(0.5, 2.0, 10),
            ys: linspace(15.0, 40.0, 10),
            taus: linspace(0.02, 0.98, 49),
        };
        let sb = sandwich(&power3(), &m, 2.0, case, &grid, DEFAULT_C2_MULTIPLIER).unwrap();
        assert!(sb.c2 > 1.0);
        let delta = sb.delta.expect("window established");
        assert!(delta > 0.0 && delta < 1.0);
        // upper - lower = 2 c2 τ² h, zero at the horizon
        for &x in &[0.5, 1.0, 2.0] {
            assert_eq!(sb.upper.value(2.0, x, Y0).unwrap(), sb.lower.value(2.0, x, Y0).unwrap());
            let tau = 0.25;
            let gap = sb.upper.value(2.0 - tau, x, Y0).unwrap() - sb.lower.value(2.0 - tau, x, Y0).unwrap();
            assert_relative_eq!(gap, 2.0 * sb.c2 * tau * tau * case.h(x), max_relative = 1e-12);
        }
        // Table 1 error at t = 1.5 lies inside the bound
        assert!(0.000333 < sb.error_bound(0.5, 1.0));
    }

    #[test]
    fn bound_partials_match_finite_differences() {
        let m = reference_model();
        let case = GrowthCase::case2(3.0, 3.0).unwrap();
        let grid = SandwichGrid {
            xs: vec![0.5, 1.0, 2.0],
            ys: vec![20.0, 30.0],
            taus: vec![0.1],
        };
        let sb = sandwich(&power3(), &m, 2.0, case, &grid, DEFAULT_C2_MULTIPLIER).unwrap();
        for s in [&sb.lower, &sb.upper] {
            let a = s.partials(1.7, 1.2, 25.0).unwrap();
            let n = fd_partials(s, 1.7, 1.2, 25.0);
            for (p, q) in [(a.t, n.t), (a.x, n.x), (a.xx, n.xx), (a.y, n.y), (a.xy, n.xy)] {
                assert!(close(p, q, 1e-6, 1e-5), "{p} vs {q}");
            }
        }
    }
}
