//! Backward recursion of the first-order step over a time partition.
//!
//! On `[t_k, t_{k+1}]` the iterate is
//!
//! ```text
//! Û(t) = Û(t_{k+1}) + (t_{k+1} - t) · [ -½(λÛ_x + ρaÛ_xy)²/Û_xx + ½a²Û_yy + bÛ_y ](t_{k+1})
//! ```
//!
//! anchored at `Û(T) = U_T`. Every step consumes second partials of the
//! previous iterate, so the iterate is carried as a bivariate Taylor jet in
//! `(x, y)` whose order drops by two per step. Partials come out exact to
//! rounding instead of from nested finite differences.

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::market::{Coefficient, MarketModel};
use crate::surrogate::{pi_from_partials, SurrogateKind, ValuePartials, ValueSurrogate};
use crate::utility::UtilitySpec;

/// Ordered knots `t₀ < t₁ < … < tₙ = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    knots: Vec<f64>,
}

impl Partition {
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("partition needs at least one interval".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let mut knots = crate::grid::linspace(0.0, horizon, n + 1);
        knots[n] = horizon;
        Ok(Self { knots })
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParameter("partition needs at least two knots".into()));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidParameter("partition knots must be finite".into()));
        }
        if let Some(w) = knots.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(format!(
                "partition knots must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1}]`; a knot belongs to the interval on its left.
    fn interval(&self, t: f64) -> Result<usize> {
        if !(t >= self.start() && t <= self.horizon()) {
            return Err(Error::Domain(format!(
                "time t = {t} outside [{}, {}]",
                self.start(),
                self.horizon()
            )));
        }
        let k = self.knots.partition_point(|&s| s < t);
        Ok(k.saturating_sub(1))
    }
}

/// How the in-interval partials of the iterate are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartialsMode {
    /// Differentiate the whole step, bracket included.
    #[default]
    FullExpression,
    /// Differentiate only the anchor `Û(t_{k+1})`; the value still uses the full step.
    AnchorOnly,
}

/// Recursive-scheme value surrogate.
#[derive(Debug, Clone)]
pub struct SchemeSurrogate {
    u: UtilitySpec,
    model: MarketModel,
    partition: Partition,
    mode: PartialsMode,
    fd_fallback: bool,
}

impl SchemeSurrogate {
    pub fn new(u: UtilitySpec, model: MarketModel, partition: Partition) -> Self {
        Self {
            u,
            model,
            partition,
            mode: PartialsMode::default(),
            fd_fallback: false,
        }
    }

    pub fn with_mode(mut self, mode: PartialsMode) -> Self {
        self.mode = mode;
        self
    }

    /// Lets custom utilities without enough closed-form derivatives fall back
    /// to central differences of their highest supplied derivative.
    pub fn with_fd_fallback(mut self, on: bool) -> Self {
        self.fd_fallback = on;
        self
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn mode(&self) -> PartialsMode {
        self.mode
    }

    /// Highest utility derivative order the recursion needs.
    pub fn required_order(&self) -> usize {
        2 * self.partition.n_intervals() + 2
    }

    /// True when some utility derivatives come from finite differences.
    pub fn is_lower_accuracy(&self) -> bool {
        match self.u.derivative_order_available() {
            Some(avail) => avail < self.required_order(),
            None => false,
        }
    }

    /// Jet in the scaled variable `ξ = (x' - x) / x`.
    fn utility_jet(&self, x: f64, order: usize) -> Result<Jet2> {
        let avail = self.u.derivative_order_available().unwrap_or(usize::MAX);
        let d = if order <= avail {
            self.u.derivatives(order, x)?
        } else if self.fd_fallback {
            let mut d = self.u.derivatives(avail, x)?;
            for extra in 1..=order - avail {
                d.push(fd_derivative(&self.u, avail, extra, x)?);
            }
            d
        } else {
            return Err(Error::Capability {
                requested: order,
                available: avail,
            });
        };
        Ok(Jet2::from_x_derivatives(&rescale(d, x), order))
    }

    /// Bracket of the step as a jet of order `order(j) - 2`.
    fn bracket(&self, j: &Jet2, x: f64, y: f64, knot: f64) -> Result<Jet2> {
        let order = j.order() - 2;
        let (ix, iy) = (1.0 / x, 1.0 / y_scale(y));
        let jx = j.dx().scale(ix);
        let jxx = jx.dx().scale(ix);
        if !(jxx.value() < 0.0) {
            return Err(Error::NonConcave(format!(
                "scheme iterate has U_xx = {} at knot t = {knot}",
                jxx.value()
            )));
        }
        let jxy = jx.dy().scale(iy);
        let jy = j.dy().scale(iy);
        let jyy = jy.dy().scale(iy);
        let yjet = |c| -> Result<Jet2> {
            let d = rescale(self.model.derivatives(c, order, y)?, y_scale(y));
            Ok(Jet2::from_y_derivatives(&d, order))
        };
        let lam = yjet(Coefficient::Lambda)?;
        let a = yjet(Coefficient::Vol)?;
        let b = yjet(Coefficient::Drift)?;
        let num = &(&lam * &jx) + &(&(&a * &jxy) * self.model.rho());
        let drift_part = &(&num.square() * &jxx.recip()) * -0.5;
        let diffusion = &(&a.square() * &jyy) * 0.5;
        let transport = &b * &jy;
        Ok(&(&drift_part + &diffusion) + &transport)
    }

    /// Iterate at knot `k` as a jet of the given order.
    fn knot_jet(&self, k: usize, x: f64, y: f64, order: usize) -> Result<Jet2> {
        let knots = self.partition.knots();
        let n = self.partition.n_intervals();
        let mut j = self.utility_jet(x, order + 2 * (n - k))?;
        for i in (k..n).rev() {
            let br = self.bracket(&j, x, y, knots[i + 1])?;
            j = &j.truncate(br.order()) + &(&br * (knots[i + 1] - knots[i]));
        }
        Ok(j)
    }

    /// Scheme iterate at the knots `t_0..t_n`, evaluated at `(x, y)`.
    pub fn knot_values(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        (0..=self.partition.n_intervals())
            .map(|k| Ok(self.knot_jet(k, x, y, 0)?.value()))
            .collect()
    }

    pub fn portfolio(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        pi_from_partials(&self.partials(t, x, y)?, &self.model, y)
    }
}

impl ValueSurrogate for SchemeSurrogate {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Scheme
    }

    fn horizon(&self) -> f64 {
        self.partition.horizon()
    }

    fn partials(&self, t: f64, x: f64, y: f64) -> Result<ValuePartials> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("wealth x = {x}")));
        }
        let k = self.partition.interval(t)?;
        let t_next = self.partition.knots()[k + 1];
        let anchor = self.knot_jet(k + 1, x, y, 4)?;
        let br = self.bracket(&anchor, x, y, t_next)?;
        let step = &anchor.truncate(2) + &(&br * (t_next - t));
        let d = match self.mode {
            PartialsMode::FullExpression => &step,
            PartialsMode::AnchorOnly => &anchor,
        };
        let (sx, sy) = (x, y_scale(y));
        Ok(ValuePartials {
            value: step.value(),
            t: -br.value(),
            x: d.partial(1, 0) / sx,
            y: d.partial(0, 1) / sy,
            xx: d.partial(2, 0) / (sx * sx),
            xy: d.partial(1, 1) / (sx * sy),
            yy: d.partial(0, 2) / (sy * sy),
        })
    }
}

/// Jets expand in `η = (y' - y) / y_scale(y)`.
fn y_scale(y: f64) -> f64 {
    y.abs().max(1.0)
}

/// Derivatives `f^(k)` to `s^k f^(k)`, the derivatives in the variable scaled by `s`.
fn rescale(mut d: Vec<f64>, s: f64) -> Vec<f64> {
    let mut p = 1.0;
    for v in d.iter_mut() {
        *v *= p;
        p *= s;
    }
    d
}

/// Central difference of order `extra` applied to `U^(base)`.
///
/// The first extra order uses step `1e-5·max(1, x)`; higher orders widen the
/// step to `ε^(1/(extra+2))·max(1, x)` so rounding does not swamp the result.
fn fd_derivative(u: &UtilitySpec, base: usize, extra: usize, x: f64) -> Result<f64> {
    let scale = x.abs().max(1.0);
    let h = if extra == 1 {
        1e-5 * scale
    } else {
        f64::EPSILON.powf(1.0 / (extra as f64 + 2.0)) * scale
    };
    let half = extra as f64 / 2.0;
    if x - half * h <= 0.0 {
        return Err(Error::Domain(format!("finite-difference stencil leaves x > 0 at x = {x}")));
    }
    let mut s = 0.0;
    let mut binom = 1.0;
    for i in 0..=extra {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binom * u.derivative(base, x + (half - i as f64) * h)?;
        binom = binom * (extra - i) as f64 / (i + 1) as f64;
    }
    Ok(s / h.powi(extra as i32))
}

/// Scheme value and partials at `(t, x, y)`.
pub fn scheme_value(
    t: f64,
    x: f64,
    y: f64,
    partition: &Partition,
    u: &UtilitySpec,
    model: &MarketModel,
) -> Result<ValuePartials> {
    SchemeSurrogate::new(u.clone(), model.clone(), partition.clone()).partials(t, x, y)
}

/// Allocation induced by the scheme iterate at `(t, x, y)`.
pub fn scheme_portfolio(
    t: f64,
    x: f64,
    y: f64,
    partition: &Partition,
    u: &UtilitySpec,
    model: &MarketModel,
) -> Result<f64> {
    SchemeSurrogate::new(u.clone(), model.clone(), partition.clone()).portfolio(t, x, y)
}

/// Errors against a reference value as the partition is doubled.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
    /// True when the errors are non-increasing in `n`.
    pub monotone: bool,
}

/// Value error of uniform partitions `ns` at `(t, x, y)` against `exact`.
pub fn refinement_check(
    t: f64,
    x: f64,
    y: f64,
    ns: &[usize],
    u: &UtilitySpec,
    model: &MarketModel,
    horizon: f64,
    exact: f64,
) -> Result<RefinementReport> {
    let errors = ns
        .iter()
        .map(|&n| Ok((scheme_value(t, x, y, &Partition::uniform(horizon, n)?, u, model)?.value - exact).abs()))
        .collect::<Result<Vec<_>>>()?;
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    Ok(RefinementReport {
        ns: ns.to_vec(),
        errors,
        monotone,
    })
}
