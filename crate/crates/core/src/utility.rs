//! Terminal utility functions and their asymptotic growth conditions.
//!
//! A [`UtilitySpec`] supplies `U_T` together with derivatives of any order
//! (built-in families) or up to a declared order (custom utilities). The
//! growth machinery compares those derivatives against a reference function
//! `M`, either `log x` ([`GrowthCase::Case1`]) or a two-term power mixture
//! ([`GrowthCase::Case2`]).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smallest admissibility exponent used when a Case 2 mixture has both
/// exponents at or below one.
pub const ADMISSIBILITY_EPS: f64 = 1e-6;

/// Default lower bound of the growth-condition grid.
pub const GROWTH_GRID_LO: f64 = 1e-4;
/// Default upper bound of the growth-condition grid.
pub const GROWTH_GRID_HI: f64 = 1e4;
/// Default number of points of the growth-condition grid.
pub const GROWTH_GRID_POINTS: usize = 400;
/// Default positivity threshold for the estimated infimum of each ratio.
pub const GROWTH_EPS: f64 = 1e-8;

type DerivativeFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

/// A user-supplied utility: `f(k, x)` returns the `k`-th derivative.
#[derive(Clone)]
pub struct CustomUtility {
    name: String,
    max_order: usize,
    f: Arc<DerivativeFn>,
}

impl fmt::Debug for CustomUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomUtility")
            .field("name", &self.name)
            .field("max_order", &self.max_order)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum UtilityFamily {
    /// `x^(1-γ)/(1-γ)`.
    Power { gamma: f64 },
    /// `log x`.
    Log,
    /// `c_a x^(1-α)/(1-α) + c_b x^(1-β)/(1-β)`.
    PowerMixture {
        c_a: f64,
        alpha: f64,
        c_b: f64,
        beta: f64,
    },
    Custom(CustomUtility),
}

/// Terminal utility `U_T`.
#[derive(Debug, Clone)]
pub struct UtilitySpec {
    family: UtilityFamily,
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) || v == 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and different from 1, got {v}"
        )));
    }
    Ok(())
}

/// `d^k/dx^k [x^(1-γ)/(1-γ)]`.
fn power_derivative(gamma: f64, k: usize, x: f64) -> f64 {
    if k == 0 {
        return x.powf(1.0 - gamma) / (1.0 - gamma);
    }
    let mut coeff = 1.0;
    for j in 0..k - 1 {
        coeff *= -gamma - j as f64;
    }
    coeff * x.powf(1.0 - gamma - k as f64)
}

fn log_derivative(k: usize, x: f64) -> f64 {
    if k == 0 {
        return x.ln();
    }
    let mut fact = 1.0;
    for j in 1..k {
        fact *= j as f64;
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * fact * x.powi(-(k as i32))
}

impl UtilitySpec {
    pub fn power(gamma: f64) -> Result<Self> {
        check_exponent("gamma", gamma)?;
        Ok(Self {
            family: UtilityFamily::Power { gamma },
        })
    }

    pub fn log() -> Self {
        Self {
            family: UtilityFamily::Log,
        }
    }

    pub fn mixture(c_a: f64, alpha: f64, c_b: f64, beta: f64) -> Result<Self> {
        check_exponent("alpha", alpha)?;
        check_exponent("beta", beta)?;
        if !(c_a > 0.0 && c_b > 0.0 && c_a.is_finite() && c_b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be positive, got c_a={c_a}, c_b={c_b}"
            )));
        }
        Ok(Self {
            family: UtilityFamily::PowerMixture {
                c_a,
                alpha,
                c_b,
                beta,
            },
        })
    }

    /// A custom utility whose derivative oracle `f(k, x)` is valid for
    /// `k <= max_order`. At least the fourth derivative is required.
    pub fn custom<F>(name: impl Into<String>, max_order: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, f64) -> f64 + Send + Sync + 'static,
    {
        if max_order < 4 {
            return Err(Error::InvalidParameter(format!(
                "custom utilities must supply derivatives through order 4, got {max_order}"
            )));
        }
        Ok(Self {
            family: UtilityFamily::Custom(CustomUtility {
                name: name.into(),
                max_order,
                f: Arc::new(f),
            }),
        })
    }

    /// Exponential utility `-exp(-a x)/a`, exposed as a custom utility with
    /// derivatives through order 4. It violates both growth cases.
    pub fn exponential(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponential rate must be positive, got {a}"
            )));
        }
        Self::custom("exponential", 4, move |k, x| {
            -(-a).powi(k as i32) * (-a * x).exp() / a
        })
    }

    pub fn family(&self) -> &UtilityFamily {
        &self.family
    }

    pub fn label(&self) -> String {
        match &self.family {
            UtilityFamily::Power { gamma } => format!("power(gamma={gamma})"),
            UtilityFamily::Log => "log".to_string(),
            UtilityFamily::PowerMixture {
                c_a,
                alpha,
                c_b,
                beta,
            } => format!("mixture(c_a={c_a},alpha={alpha},c_b={c_b},beta={beta})"),
            UtilityFamily::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// Highest derivative order available; `None` means unbounded.
    pub fn derivative_order_available(&self) -> Option<usize> {
        match &self.family {
            UtilityFamily::Custom(c) => Some(c.max_order),
            _ => None,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.family, UtilityFamily::Custom(_))
    }

    /// Constant relative risk aversion, when the family has one.
    pub fn risk_aversion(&self) -> Option<f64> {
        match self.family {
            UtilityFamily::Power { gamma } => Some(gamma),
            UtilityFamily::Log => Some(1.0),
            _ => None,
        }
    }

    /// Growth case a built-in family satisfies by construction.
    pub fn natural_growth_case(&self) -> Option<GrowthCase> {
        match self.family {
            UtilityFamily::Power { gamma } => Some(GrowthCase::Case2 {
                alpha: gamma,
                beta: gamma,
            }),
            UtilityFamily::Log => Some(GrowthCase::Case1),
            UtilityFamily::PowerMixture { alpha, beta, .. } => {
                Some(GrowthCase::Case2 { alpha, beta })
            }
            UtilityFamily::Custom(_) => None,
        }
    }

    /// `d^k U_T / dx^k` at `x`; `k = 0` is the utility itself.
    pub fn derivative(&self, k: usize, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("utility evaluated at x = {x}")));
        }
        Ok(match &self.family {
            UtilityFamily::Power { gamma } => power_derivative(*gamma, k, x),
            UtilityFamily::Log => log_derivative(k, x),
            UtilityFamily::PowerMixture {
                c_a,
                alpha,
                c_b,
                beta,
            } => c_a * power_derivative(*alpha, k, x) + c_b * power_derivative(*beta, k, x),
            UtilityFamily::Custom(c) => {
                if k > c.max_order {
                    return Err(Error::Capability {
                        requested: k,
                        available: c.max_order,
                    });
                }
                (c.f)(k, x)
            }
        })
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.derivative(0, x)
    }

    /// Derivatives of orders `0..=max_k`.
    pub fn derivatives(&self, max_k: usize, x: f64) -> Result<Vec<f64>> {
        (0..=max_k).map(|k| self.derivative(k, x)).collect()
    }

    /// Checks `U_T' > 0` and `U_T'' < 0` at every point of `xs`.
    pub fn check_shape(&self, xs: &[f64]) -> Result<()> {
        for &x in xs {
            let d1 = self.derivative(1, x)?;
            let d2 = self.derivative(2, x)?;
            if !(d1 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "utility not strictly increasing at x = {x} (U' = {d1})"
                )));
            }
            if !(d2 < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "utility not strictly concave at x = {x} (U'' = {d2})"
                )));
            }
        }
        Ok(())
    }
}

/// Reference growth class of a terminal utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthCase {
    /// `M(x) = log x`.
    Case1,
    /// `M(x) = x^(1-α)/(1-α) + x^(1-β)/(1-β)`.
    Case2 { alpha: f64, beta: f64 },
}

impl GrowthCase {
    pub fn case2(alpha: f64, beta: f64) -> Result<Self> {
        check_exponent("alpha", alpha)?;
        check_exponent("beta", beta)?;
        Ok(GrowthCase::Case2 { alpha, beta })
    }

    /// Exponent of the wealth weight in the second admissibility moment.
    ///
    /// Case 2 nominally uses `max{α, β}`, which is only `> 1` when one of the
    /// exponents exceeds one; the returned flag is set when the value had to
    /// be lifted to `1 + ADMISSIBILITY_EPS`.
    pub fn gamma_admissibility(&self) -> (f64, bool) {
        match *self {
            GrowthCase::Case1 => (1.0, false),
            GrowthCase::Case2 { alpha, beta } => {
                let g = alpha.max(beta);
                if g > 1.0 {
                    (g, false)
                } else {
                    (1.0 + ADMISSIBILITY_EPS, true)
                }
            }
        }
    }

    /// `d^k M / dx^k`.
    pub fn reference_derivative(&self, k: usize, x: f64) -> f64 {
        match *self {
            GrowthCase::Case1 => log_derivative(k, x),
            GrowthCase::Case2 { alpha, beta } => {
                power_derivative(alpha, k, x) + power_derivative(beta, k, x)
            }
        }
    }

    /// Weight `h(x)` of the error bound.
    pub fn h(&self, x: f64) -> f64 {
        match *self {
            GrowthCase::Case1 => 1.0,
            GrowthCase::Case2 { alpha, beta } => x.powf(1.0 - alpha) + x.powf(1.0 - beta),
        }
    }

    /// First and second wealth derivatives of `h`.
    pub fn h_derivatives(&self, x: f64) -> (f64, f64) {
        match *self {
            GrowthCase::Case1 => (0.0, 0.0),
            GrowthCase::Case2 { alpha, beta } => {
                let d1 = (1.0 - alpha) * x.powf(-alpha) + (1.0 - beta) * x.powf(-beta);
                let d2 = (1.0 - alpha) * (-alpha) * x.powf(-alpha - 1.0)
                    + (1.0 - beta) * (-beta) * x.powf(-beta - 1.0);
                (d1, d2)
            }
        }
    }
}

/// `M`, `h`, `G` and `h̃` evaluated at one wealth level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFunctions {
    pub m: f64,
    pub h: f64,
    pub g: f64,
    pub h_tilde: f64,
}

pub fn reference_functions(case: GrowthCase, x: f64) -> Result<ReferenceFunctions> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("reference functions at x = {x}")));
    }
    Ok(match case {
        GrowthCase::Case1 => ReferenceFunctions {
            m: x.ln(),
            h: 1.0,
            g: x.ln() + 1.0,
            h_tilde: x.powi(-4),
        },
        GrowthCase::Case2 { alpha, beta } => {
            let h = case.h(x);
            ReferenceFunctions {
                m: case.reference_derivative(0, x),
                h,
                g: h,
                h_tilde: h * (x.powf(-2.0 - 2.0 * alpha) + x.powf(-2.0 - 2.0 * beta)),
            }
        }
    })
}

/// Log-spaced wealth grid used to estimate the infima and suprema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GrowthGrid {
    fn default() -> Self {
        Self {
            lo: GROWTH_GRID_LO,
            hi: GROWTH_GRID_HI,
            points: GROWTH_GRID_POINTS,
        }
    }
}

impl GrowthGrid {
    pub fn values(&self) -> Vec<f64> {
        crate::grid::logspace(self.lo, self.hi, self.points)
    }
}

/// Estimated range of `U_T^(k) / M^(k)` for one order `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBounds {
    pub order: usize,
    pub inf: f64,
    pub sup: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub case: GrowthCase,
    pub ratios: Vec<RatioBounds>,
    pub eps: f64,
    pub pass: bool,
}

/// Estimates the growth ratios for `k = 1..=4` on `grid`.
///
/// A ratio passes when its estimated infimum exceeds `eps`, its supremum is
/// finite, and the spread `sup / inf` stays below `1 / eps`. The spread test
/// catches ratios that drift to zero or infinity at rates the finite grid
/// cannot reach.
pub fn check_growth_conditions(
    u: &UtilitySpec,
    case: GrowthCase,
    grid: &GrowthGrid,
    eps: f64,
) -> Result<GrowthReport> {
    if grid.points < 2 || !(grid.lo > 0.0 && grid.hi > grid.lo) {
        return Err(Error::InvalidParameter(format!(
            "growth grid must be log-spaced over a positive range, got {grid:?}"
        )));
    }
    let xs = grid.values();
    let mut ratios = Vec::with_capacity(4);
    for k in 1..=4 {
        let mut inf = f64::INFINITY;
        let mut sup = f64::NEG_INFINITY;
        for &x in &xs {
            let mk = case.reference_derivative(k, x);
            if mk == 0.0 {
                return Err(Error::Evaluation(format!(
                    "reference derivative of order {k} vanishes at x = {x}"
                )));
            }
            let r = u.derivative(k, x)? / mk;
            let r = if r.is_nan() { f64::INFINITY } else { r };
            inf = inf.min(r);
            sup = sup.max(r);
        }
        let pass = inf > eps && sup.is_finite() && sup / inf <= 1.0 / eps;
        ratios.push(RatioBounds {
            order: k,
            inf,
            sup,
            pass,
        });
    }
    let pass = ratios.iter().all(|r| r.pass);
    Ok(GrowthReport {
        case,
        ratios,
        eps,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivative_examples() {
        let p = UtilitySpec::power(3.0).unwrap();
        assert_relative_eq!(p.derivative(2, 1.0).unwrap(), -3.0);
        assert_relative_eq!(UtilitySpec::log().derivative(1, 2.0).unwrap(), 0.5);
        let mix = UtilitySpec::mixture(1.0, 0.5, 1.0, 2.0).unwrap();
        assert_relative_eq!(mix.derivative(0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_and_capability_errors() {
        let p = UtilitySpec::power(3.0).unwrap();
        assert!(matches!(p.derivative(1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p.derivative(1, -1.0), Err(Error::Domain(_))));
        let e = UtilitySpec::exponential(1.0).unwrap();
        assert!(matches!(
            e.derivative(5, 1.0),
            Err(Error::Capability {
                requested: 5,
                available: 4
            })
        ));
        assert!(UtilitySpec::power(1.0).is_err());
        assert!(UtilitySpec::power(-2.0).is_err());
        assert!(UtilitySpec::mixture(0.0, 2.0, 1.0, 3.0).is_err());
        assert!(UtilitySpec::custom("short", 3, |_, _| 0.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let utils = [
            UtilitySpec::power(3.0).unwrap(),
            UtilitySpec::power(0.5).unwrap(),
            UtilitySpec::log(),
            UtilitySpec::mixture(1.0, 0.5, 2.0, 2.5).unwrap(),
        ];
        for u in &utils {
            for &x in &crate::grid::logspace(0.1, 10.0, 25) {
                for k in 1..=6 {
                    let h = 1e-5 * x;
                    let fd = (u.derivative(k - 1, x + h).unwrap()
                        - u.derivative(k - 1, x - h).unwrap())
                        / (2.0 * h);
                    let exact = u.derivative(k, x).unwrap();
                    let rel = (fd - exact).abs() / exact.abs();
                    assert!(rel < 1e-6, "{} k={k} x={x}: {fd} vs {exact}", u.label());
                }
            }
        }
    }

    #[test]
    fn builtin_families_are_increasing_and_concave() {
        let xs = crate::grid::logspace(1e-3, 1e3, 50);
        for u in [
            UtilitySpec::power(3.0).unwrap(),
            UtilitySpec::log(),
            UtilitySpec::mixture(1.0, 0.5, 1.0, 2.0).unwrap(),
        ] {
            u.check_shape(&xs).unwrap();
        }
        // e^{-x} underflows long before x = 1e3
        let xs = crate::grid::logspace(1e-3, 30.0, 50);
        UtilitySpec::exponential(1.0).unwrap().check_shape(&xs).unwrap();
    }

    #[test]
    fn reference_function_examples() {
        let r = reference_functions(GrowthCase::Case1, 1.0).unwrap();
        assert_eq!((r.m, r.h, r.g, r.h_tilde), (0.0, 1.0, 1.0, 1.0));
        let c2 = GrowthCase::case2(2.0, 3.0).unwrap();
        let r = reference_functions(c2, 1.0).unwrap();
        assert_relative_eq!(r.m, -1.5);
        assert_relative_eq!(r.h, 2.0);
        assert_relative_eq!(r.g, 2.0);
        assert_relative_eq!(r.h_tilde, 4.0);
        let e = std::f64::consts::E;
        let r = reference_functions(GrowthCase::Case1, e).unwrap();
        assert_relative_eq!(r.m, 1.0);
        assert_relative_eq!(r.g, 2.0);
        assert_relative_eq!(r.h_tilde, e.powi(-4), max_relative = 1e-14);
    }

    #[test]
    fn growth_conditions_builtin() {
        let grid = GrowthGrid::default();
        let p = UtilitySpec::power(3.0).unwrap();
        let rep = check_growth_conditions(&p, GrowthCase::case2(3.0, 3.0).unwrap(), &grid, GROWTH_EPS)
            .unwrap();
        assert!(rep.pass);
        for r in &rep.ratios {
            // M carries both mixture terms, so the ratio is the constant 1/2.
            assert_relative_eq!(r.inf, 0.5, max_relative = 1e-12);
            assert_relative_eq!(r.sup, 0.5, max_relative = 1e-12);
        }
        let rep = check_growth_conditions(&UtilitySpec::log(), GrowthCase::Case1, &grid, GROWTH_EPS)
            .unwrap();
        assert!(rep.pass);
        for r in &rep.ratios {
            assert_relative_eq!(r.inf, 1.0, max_relative = 1e-12);
            assert_relative_eq!(r.sup, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn growth_conditions_cross_cases_fail() {
        let grid = GrowthGrid::default();
        let p = UtilitySpec::power(3.0).unwrap();
        assert!(!check_growth_conditions(&p, GrowthCase::Case1, &grid, GROWTH_EPS).unwrap().pass);
        let c = GrowthCase::case2(3.0, 3.0).unwrap();
        assert!(!check_growth_conditions(&UtilitySpec::log(), c, &grid, GROWTH_EPS).unwrap().pass);
    }

    #[test]
    fn exponential_fails_case1() {
        let grid = GrowthGrid::default();
        let e = UtilitySpec::exponential(1.0).unwrap();
        let rep = check_growth_conditions(&e, GrowthCase::Case1, &grid, GROWTH_EPS).unwrap();
        assert!(!rep.pass);
        assert!(rep.ratios[0].inf < GROWTH_EPS);
    }

    #[test]
    fn admissibility_gamma() {
        assert_eq!(GrowthCase::Case1.gamma_admissibility(), (1.0, false));
        assert_eq!(
            GrowthCase::case2(2.0, 3.0).unwrap().gamma_admissibility(),
            (3.0, false)
        );
        let (g, flagged) = GrowthCase::case2(0.3, 0.5).unwrap().gamma_admissibility();
        assert!(flagged);
        assert!(g > 1.0);
    }
}
