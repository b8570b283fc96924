//! Closed-form reference solutions.
//!
//! For power utility under the square-root volatility model the value function
//! is
//!
//! ```text
//! J(t, x, y) = x^(1-γ)/(1-γ) · exp{ κ (y A(τ) + B(τ)) },   κ = γ / (γ + (1-γ)ρ²)
//! ```
//!
//! where `A`, `B` solve Riccati equations built from the quadratic `f` below.
//! Constant-coefficient markets reduce to the Merton solution.

use crate::error::{Error, Result};
use crate::market::{MarketKind, MarketModel};
use crate::surrogate::{check_time, SurrogateKind, ValuePartials, ValueSurrogate};
use crate::utility::{UtilityFamily, UtilitySpec};

/// Parameters of the exact CRRA value function, with the derived quadratic.
#[derive(Debug, Clone, PartialEq)]
pub struct CrraParams {
    pub gamma: f64,
    /// Excess drift `μ - r`.
    pub mu_excess: f64,
    pub m: f64,
    pub beta_vol: f64,
    pub rho: f64,
    pub horizon: f64,
    /// Coefficients `[c0, c1, c2]` of `f(r) = c2 r² + c1 r + c0`.
    pub f_coeffs: [f64; 3],
    /// Larger root of `f` (positive for `γ > 1`).
    pub a_plus: f64,
    /// Smaller root of `f` (negative for `γ > 1`).
    pub a_minus: f64,
    /// Square root of the discriminant of `f`.
    pub alpha_disc: f64,
}

impl CrraParams {
    pub fn new(gamma: f64, mu: f64, m: f64, beta_vol: f64, rho: f64, r: f64, horizon: f64) -> Result<Self> {
        if !(gamma > 0.0) || gamma == 1.0 || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be positive and != 1, got {gamma}")));
        }
        if !(beta_vol > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta_vol}")));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let mu_e = mu - r;
        let c2 = 0.5 * beta_vol * beta_vol;
        let c1 = ((1.0 - gamma) * beta_vol * mu_e * rho - gamma) / gamma;
        let c0 = (gamma + (1.0 - gamma) * rho * rho) * (1.0 - gamma) * mu_e * mu_e / (2.0 * gamma * gamma);
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if !(disc > 0.0) {
            return Err(Error::Domain(format!("quadratic has no distinct real roots (discriminant {disc})")));
        }
        let alpha_disc = disc.sqrt();
        // cancellation-free roots
        let q = -0.5 * (c1 + c1.signum() * alpha_disc);
        let (r1, r2) = (q / c2, c0 / q);
        Ok(Self {
            gamma,
            mu_excess: mu_e,
            m,
            beta_vol,
            rho,
            horizon,
            f_coeffs: [c0, c1, c2],
            a_plus: r1.max(r2),
            a_minus: r1.min(r2),
            alpha_disc,
        })
    }

    /// Reads the parameters off a square-root volatility model.
    pub fn from_model(gamma: f64, model: &MarketModel, horizon: f64) -> Result<Self> {
        match *model.kind() {
            MarketKind::ChackoViceira { mu, m, beta } => {
                Self::new(gamma, mu, m, beta, model.rho(), model.r(), horizon)
            }
            MarketKind::Constant { .. } => Err(Error::InvalidParameter(
                "the CRRA stochastic-volatility oracle needs a chacko_viceira model".into(),
            )),
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        let [c0, c1, c2] = self.f_coeffs;
        (c2 * r + c1) * r + c0
    }

    /// Exponent multiplier `γ / (γ + (1-γ)ρ²)`.
    pub fn kappa(&self) -> f64 {
        self.gamma / (self.gamma + (1.0 - self.gamma) * self.rho * self.rho)
    }
}

/// `A(t, T)` and `B(t, T)`.
pub fn crra_coeffs(t: f64, horizon: f64, p: &CrraParams) -> Result<(f64, f64)> {
    let (a, b, _, _) = coeffs_with_rates(t, horizon, p)?;
    Ok((a, b))
}

/// `A`, `B` and their derivatives with respect to time to horizon.
fn coeffs_with_rates(t: f64, horizon: f64, p: &CrraParams) -> Result<(f64, f64, f64, f64)> {
    if !(t <= horizon) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} beyond horizon {horizon}")));
    }
    let tau = horizon - t;
    let (ap, am, al) = (p.a_plus, p.a_minus, p.alpha_disc);
    let e = (-al * tau).exp();
    let den = ap - am * e;
    let a = am * ap * (1.0 - e) / den;
    let a_tau = am * ap * al * e * (ap - am) / (den * den);
    let bw = 2.0 / (p.beta_vol * p.beta_vol);
    let b = p.m * (tau * am - bw * (den / (ap - am)).ln());
    let b_tau = p.m * (am - bw * am * al * e / den);
    Ok((a, b, a_tau, b_tau))
}

/// Exact value function of the power-utility square-root volatility problem.
#[derive(Debug, Clone)]
pub struct CrraExact {
    params: CrraParams,
    model: MarketModel,
}

impl CrraExact {
    pub fn new(gamma: f64, model: &MarketModel, horizon: f64) -> Result<Self> {
        Ok(Self {
            params: CrraParams::from_model(gamma, model, horizon)?,
            model: model.clone(),
        })
    }

    pub fn params(&self) -> &CrraParams {
        &self.params
    }

    pub fn portfolio(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let p = self.partials(t, x, y)?;
        crate::surrogate::pi_from_partials(&p, &self.model, y)
    }
}

impl ValueSurrogate for CrraExact {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Oracle
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn partials(&self, t: f64, x: f64, y: f64) -> Result<ValuePartials> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("wealth x = {x}")));
        }
        self.model.a(y)?;
        let g = self.params.gamma;
        let (a, b, a_tau, b_tau) = coeffs_with_rates(t, self.params.horizon, &self.params)?;
        let k = self.params.kappa();
        let e = (k * (y * a + b)).exp();
        let v = x.powf(1.0 - g) / (1.0 - g) * e;
        let vx = x.powf(-g) * e;
        let ka = k * a;
        Ok(ValuePartials {
            value: v,
            t: -v * k * (y * a_tau + b_tau),
            x: vx,
            y: v * ka,
            xx: -g * vx / x,
            xy: vx * ka,
            yy: v * ka * ka,
        })
    }
}

/// Value `J(t, x, y)` of the exact CRRA solution.
pub fn crra_exact_value(t: f64, x: f64, y: f64, gamma: f64, model: &MarketModel, horizon: f64) -> Result<f64> {
    CrraExact::new(gamma, model, horizon)?.value(t, x, y)
}

/// Optimal allocation of the exact CRRA solution.
pub fn crra_exact_portfolio(t: f64, x: f64, y: f64, gamma: f64, model: &MarketModel, horizon: f64) -> Result<f64> {
    CrraExact::new(gamma, model, horizon)?.portfolio(t, x, y)
}

/// Constant-coefficient (Merton) problem with power utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonParams {
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl MertonParams {
    pub fn new(gamma: f64, lambda: f64, sigma: f64, horizon: f64) -> Result<Self> {
        if !(gamma > 0.0) || gamma == 1.0 {
            return Err(Error::InvalidParameter(format!("gamma must be positive and != 1, got {gamma}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { gamma, lambda, sigma, horizon })
    }

    /// Freezes a factor model at level `y`.
    pub fn frozen(gamma: f64, model: &MarketModel, y: f64, horizon: f64) -> Result<Self> {
        Self::new(gamma, model.lambda(y)?, model.sigma(y)?, horizon)
    }

    fn growth(&self) -> f64 {
        (1.0 - self.gamma) * self.lambda * self.lambda / (2.0 * self.gamma)
    }
}

/// `U_T(x) · exp{(1-γ) λ² (T-t) / (2γ)}`.
pub fn merton_value(t: f64, x: f64, mp: &MertonParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth x = {x}")));
    }
    let g = mp.gamma;
    Ok(x.powf(1.0 - g) / (1.0 - g) * (mp.growth() * (mp.horizon - t)).exp())
}

/// `λ x / (γ σ)`.
pub fn merton_portfolio(x: f64, mp: &MertonParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth x = {x}")));
    }
    Ok(mp.lambda * x / (mp.gamma * mp.sigma))
}

impl ValueSurrogate for MertonParams {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Oracle
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn partials(&self, t: f64, x: f64, _y: f64) -> Result<ValuePartials> {
        check_time(t, self.horizon)?;
        let v = merton_value(t, x, self)?;
        let g = self.gamma;
        let vx = v * (1.0 - g) / x;
        Ok(ValuePartials {
            value: v,
            t: -self.growth() * v,
            x: vx,
            xx: -g * vx / x,
            ..Default::default()
        })
    }
}

/// Log utility with constant coefficients: `log x + λ² (T-t) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogConstantExact {
    pub lambda: f64,
    pub horizon: f64,
}

impl ValueSurrogate for LogConstantExact {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Oracle
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn partials(&self, t: f64, x: f64, _y: f64) -> Result<ValuePartials> {
        check_time(t, self.horizon)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("wealth x = {x}")));
        }
        Ok(ValuePartials {
            value: x.ln() + 0.5 * self.lambda * self.lambda * (self.horizon - t),
            t: -0.5 * self.lambda * self.lambda,
            x: 1.0 / x,
            xx: -1.0 / (x * x),
            ..Default::default()
        })
    }
}

/// The exact value function for the combinations that have one: power or log
/// utility with constant coefficients, power utility with the square-root
/// volatility model.
pub fn exact_surrogate(u: &UtilitySpec, model: &MarketModel, horizon: f64) -> Option<Box<dyn ValueSurrogate>> {
    match (u.family(), model.kind()) {
        (UtilityFamily::Power { gamma }, MarketKind::ChackoViceira { .. }) => {
            CrraExact::new(*gamma, model, horizon).ok().map(|e| Box::new(e) as Box<dyn ValueSurrogate>)
        }
        (UtilityFamily::Power { gamma }, MarketKind::Constant { .. }) => MertonParams::frozen(*gamma, model, 0.0, horizon)
            .ok()
            .map(|e| Box::new(e) as Box<dyn ValueSurrogate>),
        (UtilityFamily::Log, MarketKind::Constant { .. }) => model.lambda(0.0).ok().map(|lambda| {
            Box::new(LogConstantExact { lambda, horizon }) as Box<dyn ValueSurrogate>
        }),
        _ => None,
    }
}
