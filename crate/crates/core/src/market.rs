//! One risky asset driven by one stochastic factor.
//!
//! ```text
//! dS = μ(Y) S dt + σ(Y) S dW¹
//! dY = b(Y) dt + a(Y) (ρ dW¹ + √(1-ρ²) dW²)
//! ```
//!
//! Every coefficient exposes derivatives of arbitrary order in `y`, which the
//! recursive scheme needs once the terminal data become factor dependent.

use crate::error::{Error, Result};

/// Default lower edge of the factor domain for square-root factor models.
pub const DEFAULT_Y_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarketKind {
    /// All coefficients constant in `y`.
    Constant { mu: f64, sigma: f64, b: f64, a: f64 },
    /// `μ` constant, `σ = 1/√y`, `b = m - y`, `a = β√y`.
    ChackoViceira { mu: f64, m: f64, beta: f64 },
}

/// Selects one coefficient function of the factor level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Mu,
    Sigma,
    /// Factor drift `b`.
    Drift,
    /// Factor volatility `a`.
    Vol,
    /// Sharpe ratio `λ = (μ - r)/σ`.
    Lambda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    kind: MarketKind,
    rho: f64,
    r: f64,
    y_min: f64,
}

/// Coefficients and the `y`-derivatives consumed by the closed-form formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorCoefficients {
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_y: f64,
    pub lambda_yy: f64,
    pub a: f64,
    pub a_y: f64,
    pub a_yy: f64,
    pub b: f64,
    pub b_y: f64,
}

/// `d^k/dy^k y^p`.
fn power_of_y(p: f64, k: usize, y: f64) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c *= p - j as f64;
    }
    c * y.powf(p - k as f64)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

impl MarketModel {
    pub fn builtin_constant(mu: f64, sigma: f64, b: f64, a: f64, rho: f64, r: f64) -> Result<Self> {
        for (n, v) in [("mu", mu), ("sigma", sigma), ("b", b), ("a", a), ("r", r)] {
            check_finite(n, v)?;
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if a < 0.0 {
            return Err(Error::InvalidParameter(format!("a must be non-negative, got {a}")));
        }
        if r < 0.0 {
            return Err(Error::InvalidParameter(format!("r must be non-negative, got {r}")));
        }
        check_rho(rho)?;
        Ok(Self {
            kind: MarketKind::Constant { mu, sigma, b, a },
            rho,
            r,
            y_min: f64::NEG_INFINITY,
        })
    }

    pub fn builtin_chacko_viceira(mu: f64, m: f64, beta_vol: f64, rho: f64, r: f64) -> Result<Self> {
        for (n, v) in [("mu", mu), ("m", m), ("beta", beta_vol), ("r", r)] {
            check_finite(n, v)?;
        }
        if !(beta_vol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "factor volatility beta must be positive, got {beta_vol}"
            )));
        }
        if r < 0.0 {
            return Err(Error::InvalidParameter(format!("r must be non-negative, got {r}")));
        }
        check_rho(rho)?;
        Ok(Self {
            kind: MarketKind::ChackoViceira { mu, m, beta: beta_vol },
            rho,
            r,
            y_min: DEFAULT_Y_MIN,
        })
    }

    /// Replaces the lower edge of the factor domain (square-root models only).
    pub fn with_y_min(mut self, y_min: f64) -> Result<Self> {
        if let MarketKind::ChackoViceira { .. } = self.kind {
            if !(y_min > 0.0) {
                return Err(Error::InvalidParameter(format!("y_min must be positive, got {y_min}")));
            }
            self.y_min = y_min;
        }
        Ok(self)
    }

    pub fn kind(&self) -> &MarketKind {
        &self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Lower edge of the factor domain, if the model has one.
    pub fn domain_min(&self) -> Option<f64> {
        match self.kind {
            MarketKind::Constant { .. } => None,
            MarketKind::ChackoViceira { .. } => Some(self.y_min),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, MarketKind::Constant { .. })
    }

    pub fn label(&self) -> String {
        match self.kind {
            MarketKind::Constant { mu, sigma, b, a } => format!(
                "constant(mu={mu},sigma={sigma},b={b},a={a},rho={},r={})",
                self.rho, self.r
            ),
            MarketKind::ChackoViceira { mu, m, beta } => format!(
                "chacko_viceira(mu={mu},m={m},beta={beta},rho={},r={})",
                self.rho, self.r
            ),
        }
    }

    fn check_y(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::Domain(format!("factor level y = {y}")));
        }
        if let MarketKind::ChackoViceira { .. } = self.kind {
            if y < self.y_min {
                return Err(Error::Domain(format!(
                    "factor level y = {y} below domain edge {}",
                    self.y_min
                )));
            }
        }
        Ok(())
    }

    /// `d^k c / dy^k` for coefficient `c` at factor level `y`.
    pub fn derivative(&self, c: Coefficient, k: usize, y: f64) -> Result<f64> {
        self.check_y(y)?;
        let zero_unless_value = |v: f64| if k == 0 { v } else { 0.0 };
        Ok(match self.kind {
            MarketKind::Constant { mu, sigma, b, a } => match c {
                Coefficient::Mu => zero_unless_value(mu),
                Coefficient::Sigma => zero_unless_value(sigma),
                Coefficient::Drift => zero_unless_value(b),
                Coefficient::Vol => zero_unless_value(a),
                Coefficient::Lambda => zero_unless_value((mu - self.r) / sigma),
            },
            MarketKind::ChackoViceira { mu, m, beta } => match c {
                Coefficient::Mu => zero_unless_value(mu),
                Coefficient::Sigma => power_of_y(-0.5, k, y),
                Coefficient::Drift => match k {
                    0 => m - y,
                    1 => -1.0,
                    _ => 0.0,
                },
                Coefficient::Vol => beta * power_of_y(0.5, k, y),
                Coefficient::Lambda => (mu - self.r) * power_of_y(0.5, k, y),
            },
        })
    }

    /// Derivatives of orders `0..=max_k`.
    pub fn derivatives(&self, c: Coefficient, max_k: usize, y: f64) -> Result<Vec<f64>> {
        (0..=max_k).map(|k| self.derivative(c, k, y)).collect()
    }

    pub fn mu(&self, y: f64) -> Result<f64> {
        self.derivative(Coefficient::Mu, 0, y)
    }

    pub fn sigma(&self, y: f64) -> Result<f64> {
        self.derivative(Coefficient::Sigma, 0, y)
    }

    pub fn b(&self, y: f64) -> Result<f64> {
        self.derivative(Coefficient::Drift, 0, y)
    }

    pub fn a(&self, y: f64) -> Result<f64> {
        self.derivative(Coefficient::Vol, 0, y)
    }

    pub fn lambda(&self, y: f64) -> Result<f64> {
        self.derivative(Coefficient::Lambda, 0, y)
    }

    pub fn coefficients(&self, y: f64) -> Result<FactorCoefficients> {
        use Coefficient::*;
        Ok(FactorCoefficients {
            sigma: self.derivative(Sigma, 0, y)?,
            lambda: self.derivative(Lambda, 0, y)?,
            lambda_y: self.derivative(Lambda, 1, y)?,
            lambda_yy: self.derivative(Lambda, 2, y)?,
            a: self.derivative(Vol, 0, y)?,
            a_y: self.derivative(Vol, 1, y)?,
            a_yy: self.derivative(Vol, 2, y)?,
            b: self.derivative(Drift, 0, y)?,
            b_y: self.derivative(Drift, 1, y)?,
        })
    }
}

/// Grid estimate of the coefficient bound sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBoundsReport {
    /// Largest value of `|a| + |1/a| + |a'| + |a''| + |b| + |b'| + |λ| + |λ'| + |λ''|`.
    pub sup: f64,
    /// Factor level where `sup` was attained.
    pub argmax_y: f64,
    pub constant: f64,
    pub pass: bool,
}

/// Estimates the bound sum on `y_grid` and compares it with `c`.
///
/// The result is advisory: a failing report does not stop any computation.
pub fn validate_model_bounds(model: &MarketModel, y_grid: &[f64], c: f64) -> Result<ModelBoundsReport> {
    if y_grid.is_empty() {
        return Err(Error::InvalidParameter("empty factor grid".into()));
    }
    let mut sup = f64::NEG_INFINITY;
    let mut argmax_y = y_grid[0];
    for &y in y_grid {
        let k = model.coefficients(y)?;
        let inv_a = if k.a == 0.0 { f64::INFINITY } else { 1.0 / k.a.abs() };
        let s = k.a.abs()
            + inv_a
            + k.a_y.abs()
            + k.a_yy.abs()
            + k.b.abs()
            + k.b_y.abs()
            + k.lambda.abs()
            + k.lambda_y.abs()
            + k.lambda_yy.abs();
        if s > sup {
            sup = s;
            argmax_y = y;
        }
    }
    Ok(ModelBoundsReport {
        sup,
        argmax_y,
        constant: c,
        pass: c == f64::INFINITY || sup <= c,
    })
}
