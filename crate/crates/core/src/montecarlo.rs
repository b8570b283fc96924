//! Monte Carlo estimation of expected terminal utility under feedback strategies.
//!
//! Paths of `(X, Y)` follow
//!
//! ```text
//! dX = σ(Y) π (λ(Y) dt + dW¹),    dY = b(Y) dt + a(Y)(ρ dW¹ + √(1-ρ²) dW²)
//! ```
//!
//! discretized by Euler–Maruyama, either on `X` directly or on `log X`.
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! and results are reduced in path order, so the estimate does not depend on
//! the number of worker threads.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::oracle::CrraExact;
use crate::surrogate::{pi_from_partials, ValueHat, ValueSurrogate};
use crate::utility::{GrowthCase, UtilitySpec};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HORIZON_APPROX_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimScheme {
    Euler,
    #[default]
    LogEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: SimScheme,
    /// Reflection floor for factor models defined on `y > 0`.
    pub y_min: f64,
    pub antithetic: bool,
    /// Wealth floor of the plain Euler scheme.
    pub x_floor: f64,
    /// Upper limit on `n_paths · steps`.
    pub max_path_steps: u64,
    /// Worker threads; `None` defers to the environment and then to rayon.
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            seed: 0,
            scheme: SimScheme::LogEuler,
            y_min: 1e-6,
            antithetic: false,
            x_floor: 1e-10,
            max_path_steps: 2_000_000_000,
            threads: None,
        }
    }
}

/// Feedback strategy `(t, x, y) ↦ π`, the amount held in the risky asset.
#[derive(Clone)]
pub struct StrategyMap {
    label: String,
    f: Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>,
}

impl std::fmt::Debug for StrategyMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StrategyMap").field("label", &self.label).finish()
    }
}

impl StrategyMap {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _| Ok(0.0))
    }

    /// Allocation `(-λV_x - ρaV_xy)/(σV_xx)` of a value surrogate.
    pub fn from_surrogate(label: impl Into<String>, s: Arc<dyn ValueSurrogate>, model: MarketModel) -> Self {
        Self::new(label, move |t, x, y| pi_from_partials(&s.partials(t, x, y)?, &model, y))
    }

    pub fn pi_hat(u: &UtilitySpec, model: &MarketModel, horizon: f64) -> Result<Self> {
        let hat = ValueHat::new(u.clone(), model.clone(), horizon)?;
        Ok(Self::from_surrogate("pi_hat", Arc::new(hat), model.clone()))
    }

    /// Exact optimum for power utility under the square-root volatility model.
    pub fn crra_exact(gamma: f64, model: &MarketModel, horizon: f64) -> Result<Self> {
        let e = CrraExact::new(gamma, model, horizon)?;
        Ok(Self::from_surrogate("pi_exact", Arc::new(e), model.clone()))
    }

    /// Myopic rule `λ(y) x / (γ σ(y))`.
    pub fn merton(gamma: f64, model: &MarketModel) -> Self {
        let m = model.clone();
        Self::new("pi_merton", move |_, x, y| Ok(m.lambda(y)? * x / (gamma * m.sigma(y)?)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        (self.f)(t, x, y)
    }
}

/// Sample mean of `U_T(X_T)` and path diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_effective`.
    pub se: f64,
    pub n_paths: usize,
    /// Independent samples: pairs when antithetic, paths otherwise.
    pub n_effective: usize,
    pub steps: usize,
    pub min_wealth: f64,
    pub floor_hit_fraction: f64,
    pub reflections: u64,
    /// Estimate of `E ∫ σ² π² ds`.
    pub moment_quadratic: f64,
    /// Estimate of `E ∫ X^(-2γ) σ² π² ds`.
    pub moment_weighted: f64,
    /// Exponent `γ` used in the weighted moment.
    pub moment_gamma: f64,
    /// `sup |σ π / x|` over visited states.
    pub sup_proportional: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    utility: f64,
    min_wealth: f64,
    hit_floor: bool,
    reflections: u64,
    quad: f64,
    weighted: f64,
    sup_prop: f64,
    /// Step at which the state stopped being finite.
    blew_up: Option<usize>,
}

struct Problem<'a> {
    strategy: &'a StrategyMap,
    u: &'a UtilitySpec,
    model: &'a MarketModel,
    t0: f64,
    x0: f64,
    y0: f64,
    steps: usize,
    dt: f64,
    cfg: &'a SimConfig,
    moment_gamma: f64,
}

impl Problem<'_> {
    /// Simulates one path (or an antithetic pair) from the given stream.
    fn run(&self, stream: u64, n_members: usize) -> Result<Vec<PathOutcome>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        let rho = self.model.rho();
        let rho_c = (1.0 - rho * rho).sqrt();
        let sq = self.dt.sqrt();
        let y_floor = self.model.domain_min().map(|m| m.max(self.cfg.y_min));
        let mut xs = [self.x0; 2];
        let mut ys = [self.y0; 2];
        let mut out = [PathOutcome {
            min_wealth: self.x0,
            ..Default::default()
        }; 2];
        let mut live = [true; 2];
        for step in 0..self.steps {
            let t = self.t0 + step as f64 * self.dt;
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            for m in 0..n_members {
                if !live[m] {
                    continue;
                }
                let sign = if m == 0 { 1.0 } else { -1.0 };
                let (dw1, dw2) = (sign * sq * z1, sign * sq * z2);
                let (x, y) = (xs[m], ys[m]);
                let o = &mut out[m];
                let pi = self.strategy.eval(t, x, y)?;
                let sigma = self.model.sigma(y)?;
                let lam = self.model.lambda(y)?;
                let a = self.model.a(y)?;
                let b = self.model.b(y)?;
                let sp = sigma * pi;
                o.quad += sp * sp * self.dt;
                o.weighted += x.powf(-2.0 * self.moment_gamma) * sp * sp * self.dt;
                o.sup_prop = o.sup_prop.max((sp / x).abs());
                let x_new = match self.cfg.scheme {
                    SimScheme::LogEuler => {
                        let theta = sp / x;
                        x * (theta * lam * self.dt - 0.5 * theta * theta * self.dt + theta * dw1).exp()
                    }
                    SimScheme::Euler => {
                        let v = x + sp * (lam * self.dt + dw1);
                        if v <= self.cfg.x_floor {
                            o.hit_floor = true;
                            self.cfg.x_floor
                        } else {
                            v
                        }
                    }
                };
                let mut y_new = y + b * self.dt + a * (rho * dw1 + rho_c * dw2);
                if let Some(lo) = y_floor {
                    if y_new < lo {
                        y_new = (2.0 * lo - y_new).max(lo);
                        o.reflections += 1;
                    }
                }
                if !(x_new.is_finite() && y_new.is_finite() && o.weighted.is_finite() && o.quad.is_finite()) {
                    o.blew_up = Some(step);
                    live[m] = false;
                    continue;
                }
                o.min_wealth = o.min_wealth.min(x_new);
                xs[m] = x_new;
                ys[m] = y_new;
            }
        }
        for m in 0..n_members {
            if live[m] {
                out[m].utility = self.u.value(xs[m])?;
                if !out[m].utility.is_finite() {
                    out[m].blew_up = Some(self.steps);
                }
            }
        }
        Ok(out[..n_members].to_vec())
    }
}

fn thread_count(cfg: &SimConfig) -> Option<usize> {
    let env = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    match (cfg.threads, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Pairwise summation; the split points depend only on the length.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Mean and standard error; identical samples give their common value and zero error.
fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let shift = v[0];
    let centred: Vec<f64> = v.iter().map(|x| x - shift).collect();
    let mean = shift + pairwise_sum(&centred) / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean_of(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    pairwise_sum(&v) / v.len() as f64
}

struct RawRun {
    outcomes: Vec<Vec<PathOutcome>>,
    steps: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_paths(
    strategy: &StrategyMap,
    u: &UtilitySpec,
    model: &MarketModel,
    t0: f64,
    x0: f64,
    y0: f64,
    horizon: f64,
    cfg: &SimConfig,
    moment_gamma: f64,
) -> Result<RawRun> {
    if cfg.n_paths == 0 || (cfg.antithetic && cfg.n_paths < 2) {
        return Err(Error::InvalidParameter(format!("n_paths = {} too small", cfg.n_paths)));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("initial wealth x0 = {x0}")));
    }
    let span = horizon - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidParameter(format!("t0 = {t0} must lie before the horizon {horizon}")));
    }
    if !(cfg.dt > 0.0 && cfg.dt <= span * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!("dt = {} must lie in (0, {span}]", cfg.dt)));
    }
    if !(cfg.y_min > 0.0) {
        return Err(Error::InvalidParameter(format!("y_min must be positive, got {}", cfg.y_min)));
    }
    model.sigma(y0)?;
    let steps = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let work = cfg.n_paths as u64 * steps as u64;
    if work > cfg.max_path_steps {
        return Err(Error::InvalidParameter(format!(
            "{} paths × {steps} steps exceeds the budget of {} path-steps",
            cfg.n_paths, cfg.max_path_steps
        )));
    }
    let problem = Problem {
        strategy,
        u,
        model,
        t0,
        x0,
        y0,
        steps,
        dt: span / steps as f64,
        cfg,
        moment_gamma,
    };
    let (units, members) = if cfg.antithetic {
        (cfg.n_paths / 2, 2)
    } else {
        (cfg.n_paths, 1)
    };
    let job = || {
        (0..units)
            .into_par_iter()
            .map(|i| problem.run(i as u64, members))
            .collect::<Result<Vec<_>>>()
    };
    let outcomes = match thread_count(cfg) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    Ok(RawRun { outcomes, steps })
}

fn summarize(run: &RawRun, n_paths: usize, moment_gamma: f64) -> MCEstimate {
    let samples: Vec<f64> = run
        .outcomes
        .iter()
        .map(|unit| mean_of(unit.iter().map(|o| o.utility)))
        .collect();
    let (mean, se) = mean_and_se(&samples);
    let all = || run.outcomes.iter().flatten();
    let count = all().count();
    MCEstimate {
        mean,
        se,
        n_paths,
        n_effective: samples.len(),
        steps: run.steps,
        min_wealth: all().map(|o| o.min_wealth).fold(f64::INFINITY, f64::min),
        floor_hit_fraction: all().filter(|o| o.hit_floor).count() as f64 / count as f64,
        reflections: all().map(|o| o.reflections).sum(),
        moment_quadratic: mean_of(all().map(|o| o.quad)),
        moment_weighted: mean_of(all().map(|o| o.weighted)),
        moment_gamma,
        sup_proportional: all().map(|o| o.sup_prop).fold(0.0, f64::max),
    }
}

fn default_moment_gamma(u: &UtilitySpec) -> f64 {
    u.natural_growth_case().map_or(1.0, |c| c.gamma_admissibility().0)
}

/// Estimates `E[U_T(X_T)]` from `(t0, x0, y0)` under `strategy`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_expected_utility(
    strategy: &StrategyMap,
    u: &UtilitySpec,
    model: &MarketModel,
    t0: f64,
    x0: f64,
    y0: f64,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    let g = default_moment_gamma(u);
    let run = run_paths(strategy, u, model, t0, x0, y0, horizon, cfg, g)?;
    for (i, unit) in run.outcomes.iter().enumerate() {
        for (m, o) in unit.iter().enumerate() {
            if let Some(step) = o.blew_up {
                let path = if cfg.antithetic { 2 * i + m } else { i };
                return Err(Error::Simulation { path, step });
            }
        }
    }
    Ok(summarize(&run, cfg.n_paths, g))
}

/// Empirical admissibility checks at `n_paths` and `n_paths / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub full: MCEstimate,
    pub half: MCEstimate,
    /// Paths whose state became non-finite in the full run.
    pub nonfinite_paths: usize,
    pub divergent: bool,
    pub reasons: Vec<String>,
}

/// Moment estimates, wealth statistics and `sup|σπ/x|`, flagged as divergent
/// when paths hit the wealth floor or blow up, or when a moment estimate more
/// than doubles as the path count doubles.
#[allow(clippy::too_many_arguments)]
pub fn admissibility_diagnostics(
    strategy: &StrategyMap,
    u: &UtilitySpec,
    model: &MarketModel,
    t0: f64,
    x0: f64,
    y0: f64,
    horizon: f64,
    cfg: &SimConfig,
    case: GrowthCase,
) -> Result<AdmissibilityReport> {
    let g = case.gamma_admissibility().0;
    let mut half_cfg = cfg.clone();
    half_cfg.n_paths = (cfg.n_paths / 2).max(if cfg.antithetic { 2 } else { 1 });
    let full_run = run_paths(strategy, u, model, t0, x0, y0, horizon, cfg, g)?;
    let half_run = run_paths(strategy, u, model, t0, x0, y0, horizon, &half_cfg, g)?;

    let finite_only = |run: &RawRun| RawRun {
        outcomes: run
            .outcomes
            .iter()
            .map(|unit| unit.iter().copied().filter(|o| o.blew_up.is_none()).collect::<Vec<_>>())
            .filter(|unit: &Vec<PathOutcome>| !unit.is_empty())
            .collect(),
        steps: run.steps,
    };
    let nonfinite_paths = full_run.outcomes.iter().flatten().filter(|o| o.blew_up.is_some()).count();
    let (f, h) = (finite_only(&full_run), finite_only(&half_run));
    let empty = |r: &RawRun| r.outcomes.is_empty();
    let nan_estimate = |n| MCEstimate {
        mean: f64::NAN,
        se: f64::NAN,
        n_paths: n,
        n_effective: 0,
        steps: full_run.steps,
        min_wealth: f64::NAN,
        floor_hit_fraction: f64::NAN,
        reflections: 0,
        moment_quadratic: f64::INFINITY,
        moment_weighted: f64::INFINITY,
        moment_gamma: g,
        sup_proportional: f64::INFINITY,
    };
    let full = if empty(&f) { nan_estimate(cfg.n_paths) } else { summarize(&f, cfg.n_paths, g) };
    let half = if empty(&h) { nan_estimate(half_cfg.n_paths) } else { summarize(&h, half_cfg.n_paths, g) };

    let mut reasons = Vec::new();
    if nonfinite_paths > 0 {
        reasons.push(format!("{nonfinite_paths} paths became non-finite"));
    }
    if full.floor_hit_fraction > 0.0 {
        reasons.push(format!("{:.3e} of paths hit the wealth floor", full.floor_hit_fraction));
    }
    for (name, a, b) in [
        ("E∫σ²π²", full.moment_quadratic, half.moment_quadratic),
        ("E∫X^(-2γ)σ²π²", full.moment_weighted, half.moment_weighted),
        ("sup|σπ/x|", full.sup_proportional, half.sup_proportional),
    ] {
        if !a.is_finite() {
            reasons.push(format!("{name} is not finite"));
        } else if a > 2.0 * b.abs() && a > 0.0 {
            reasons.push(format!("{name} grew from {b:.6e} to {a:.6e} as paths doubled"));
        }
    }
    Ok(AdmissibilityReport {
        divergent: !reasons.is_empty(),
        full,
        half,
        nonfinite_paths,
        reasons,
    })
}

/// Least-squares fit of `log|error|` against `log(T - t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub intercept: f64,
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Times dropped because the error was exactly zero.
    pub dropped: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Fits the convergence order of `error(t)` as `t → T`.
pub fn convergence_study<F>(error: F, ts: &[f64], horizon: f64) -> Result<ConvergenceFit>
where
    F: Fn(f64) -> Result<f64>,
{
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("times must be strictly increasing".into()));
    }
    if let Some(&t) = ts.iter().find(|&&t| !(t < horizon)) {
        return Err(Error::InvalidParameter(format!("time {t} is not before the horizon {horizon}")));
    }
    let mut fit = ConvergenceFit {
        slope: f64::NAN,
        intercept: f64::NAN,
        taus: Vec::new(),
        errors: Vec::new(),
        dropped: Vec::new(),
        warnings: Vec::new(),
    };
    for &t in ts {
        let e = error(t)?.abs();
        if !e.is_finite() {
            return Err(Error::Evaluation(format!("non-finite error at t = {t}")));
        }
        if e == 0.0 {
            fit.dropped.push(t);
            fit.warnings.push(format!("zero error at t = {t}; point dropped"));
            continue;
        }
        fit.taus.push(horizon - t);
        fit.errors.push(e);
    }
    let (slope, intercept) = fit_log_slope(&fit.taus, &fit.errors)?;
    fit.slope = slope;
    fit.intercept = intercept;
    Ok(fit)
}

/// Slope and intercept of the least-squares line through `(log τ, log e)`.
pub fn fit_log_slope(taus: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if taus.len() != errors.len() || taus.len() < 2 {
        return Err(Error::Evaluation(format!("need at least two usable points, got {}", taus.len())));
    }
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Evaluation("all times coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Increments `(ΔW¹, ρΔW¹ + √(1-ρ²)ΔW²)` of path `path`, as the engine draws them.
pub fn driving_increments(seed: u64, path: u64, steps: usize, dt: f64, rho: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let sq = dt.sqrt();
    let rho_c = (1.0 - rho * rho).sqrt();
    (0..steps)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            (sq * z1, sq * (rho * z1 + rho_c * z2))
        })
        .collect()
}
