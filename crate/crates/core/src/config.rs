//! JSON experiment configuration.
//!
//! A config names the terminal utility, the market model, the horizon, the
//! evaluation grids and the per-command options. Parsing reports the path of
//! the offending field; [`ExperimentConfig::resolve`] turns the raw document
//! into validated library objects before anything is computed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::market::MarketModel;
use crate::montecarlo::{SimConfig, SimScheme};
use crate::scheme::{Partition, PartialsMode};
use crate::surrogate::DEFAULT_C2_MULTIPLIER;
use crate::utility::{GrowthCase, GrowthGrid, UtilitySpec, GROWTH_EPS};

/// Bundled parameter set of the square-root volatility example.
pub const PRESET_FOUQUE_CV: &str = include_str!("../presets/fouque_cv.json");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown preset `{0}` (available: fouque_cv)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    Power { gamma: f64 },
    Log,
    Mixture { c_a: f64, alpha: f64, c_b: f64, beta: f64 },
    /// `-e^(-a x)/a`, supplied as a custom utility with four derivatives.
    Exponential { a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    Constant {
        mu: f64,
        sigma: f64,
        b: f64,
        a: f64,
        rho: f64,
        #[serde(default)]
        r: f64,
    },
    ChackoViceira {
        mu: f64,
        m: f64,
        beta: f64,
        rho: f64,
        #[serde(default)]
        r: f64,
        #[serde(default)]
        y_min: Option<f64>,
    },
}

/// Explicit list of points or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        n: usize,
        #[serde(default)]
        log: bool,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range { start, stop, n, log: false } => crate::grid::linspace(*start, *stop, *n),
            GridSpec::Range { start, stop, n, log: true } => crate::grid::logspace(*start, *stop, *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsConfig {
    #[serde(default)]
    pub t: Option<GridSpec>,
    #[serde(default)]
    pub x: Option<GridSpec>,
    #[serde(default)]
    pub y: Option<GridSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    FullExpression,
    AnchorOnly,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub knots: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: Option<ModeConfig>,
    #[serde(default)]
    pub fd_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimSchemeConfig {
    Euler,
    LogEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Option<SimSchemeConfig>,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub y_min: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub max_path_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthCaseConfig {
    Case1,
    Case2 { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichConfig {
    #[serde(default)]
    pub multiplier: Option<f64>,
    /// Candidate times to horizon for the validity window.
    #[serde(default)]
    pub taus: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub model_bound_c: Option<f64>,
    #[serde(default)]
    pub y_grid: Option<GridSpec>,
    #[serde(default)]
    pub growth_grid: Option<GrowthGridConfig>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthGridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    #[serde(default)]
    pub ts: Option<Vec<f64>>,
    #[serde(default)]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub x: f64,
    pub y: f64,
    pub ts: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    PiHat,
    PiExact,
    PiMerton,
    PiScheme,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t0: Vec<f64>,
    pub x0: f64,
    pub y0: f64,
    #[serde(default)]
    pub strategies: Option<Vec<StrategyName>>,
}

/// Raw experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub utility: UtilityConfig,
    pub market: MarketConfig,
    pub horizon: f64,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default)]
    pub scheme: Option<SchemeConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub growth_case: Option<GrowthCaseConfig>,
    #[serde(default)]
    pub sandwich: Option<SandwichConfig>,
    #[serde(default)]
    pub check: Option<CheckConfig>,
    #[serde(default)]
    pub table1: Option<Table1Config>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "fouque_cv" => Self::from_json(PRESET_FOUQUE_CV),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Validates the document and builds the library objects.
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        let inv = |field: &str, e: crate::Error| ConfigError::Invalid(format!("{field}: {e}"));
        let utility = match self.utility {
            UtilityConfig::Power { gamma } => UtilitySpec::power(gamma),
            UtilityConfig::Log => Ok(UtilitySpec::log()),
            UtilityConfig::Mixture { c_a, alpha, c_b, beta } => UtilitySpec::mixture(c_a, alpha, c_b, beta),
            UtilityConfig::Exponential { a } => UtilitySpec::exponential(a),
        }
        .map_err(|e| inv("utility", e))?;
        let model = match self.market {
            MarketConfig::Constant { mu, sigma, b, a, rho, r } => MarketModel::builtin_constant(mu, sigma, b, a, rho, r),
            MarketConfig::ChackoViceira { mu, m, beta, rho, r, y_min } => {
                MarketModel::builtin_chacko_viceira(mu, m, beta, rho, r)
                    .and_then(|md| match y_min {
                        Some(v) => md.with_y_min(v),
                        None => Ok(md),
                    })
            }
        }
        .map_err(|e| inv("market", e))?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::Invalid(format!("horizon: must be positive, got {}", self.horizon)));
        }
        let horizon = self.horizon;

        let grid = |name: &str, g: &Option<GridSpec>| -> Result<Option<Vec<f64>>, ConfigError> {
            let Some(g) = g else { return Ok(None) };
            let v = g.values();
            if v.iter().any(|p| !p.is_finite()) {
                return Err(ConfigError::Invalid(format!("grids.{name}: non-finite point")));
            }
            Ok(Some(v))
        };
        let ts = grid("t", &self.grids.t)?;
        let xs = grid("x", &self.grids.x)?;
        let ys = grid("y", &self.grids.y)?;
        if let Some(ts) = &ts {
            if let Some(t) = ts.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
                return Err(ConfigError::Invalid(format!("grids.t: {t} outside [0, {horizon}]")));
            }
        }
        if let Some(xs) = &xs {
            if let Some(x) = xs.iter().find(|&&x| !(x > 0.0)) {
                return Err(ConfigError::Invalid(format!("grids.x: wealth {x} must be positive")));
            }
        }

        let sc = self.scheme.clone().unwrap_or_default();
        let partition = match (&sc.n, &sc.knots) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid("scheme: give either `n` or `knots`, not both".into()))
            }
            (_, Some(k)) => {
                let p = Partition::from_knots(k.clone()).map_err(|e| inv("scheme.knots", e))?;
                if p.start() != 0.0 || p.horizon() != horizon {
                    return Err(ConfigError::Invalid(format!(
                        "scheme.knots: must run from 0 to the horizon {horizon}"
                    )));
                }
                p
            }
            (n, None) => Partition::uniform(horizon, n.unwrap_or(4)).map_err(|e| inv("scheme.n", e))?,
        };
        let scheme_mode = match sc.mode {
            Some(ModeConfig::AnchorOnly) => PartialsMode::AnchorOnly,
            _ => PartialsMode::FullExpression,
        };

        let sim = self.simulation.as_ref().map(|s| {
            let d = SimConfig::default();
            SimConfig {
                n_paths: s.n_paths,
                dt: s.dt,
                seed: s.seed,
                scheme: match s.scheme {
                    Some(SimSchemeConfig::Euler) => SimScheme::Euler,
                    _ => SimScheme::LogEuler,
                },
                y_min: s.y_min.unwrap_or(d.y_min),
                antithetic: s.antithetic,
                x_floor: d.x_floor,
                max_path_steps: s.max_path_steps.unwrap_or(d.max_path_steps),
                threads: s.threads,
            }
        });

        let growth_case = match self.growth_case {
            Some(GrowthCaseConfig::Case1) => Some(GrowthCase::Case1),
            Some(GrowthCaseConfig::Case2 { alpha, beta }) => {
                Some(GrowthCase::case2(alpha, beta).map_err(|e| inv("growth_case", e))?)
            }
            None => None,
        };

        let sw = self.sandwich.clone().unwrap_or_default();
        let c2_multiplier = sw.multiplier.unwrap_or(DEFAULT_C2_MULTIPLIER);
        let sandwich_taus = sw
            .taus
            .map(|g| g.values())
            .unwrap_or_else(|| crate::grid::linspace(0.01, 0.99, 99));

        let ck = self.check.clone().unwrap_or_default();
        let growth_grid = ck.growth_grid.map_or(GrowthGrid::default(), |g| GrowthGrid {
            lo: g.lo,
            hi: g.hi,
            points: g.points,
        });

        Ok(Experiment {
            utility,
            model,
            horizon,
            ts,
            xs,
            ys,
            partition,
            scheme_mode,
            fd_fallback: sc.fd_fallback,
            sim,
            growth_case,
            c2_multiplier,
            sandwich_taus,
            model_bound_c: ck.model_bound_c.unwrap_or(10.0),
            check_y_grid: ck.y_grid.map(|g| g.values()),
            growth_grid,
            growth_eps: ck.eps.unwrap_or(GROWTH_EPS),
            raw: self.clone(),
        })
    }
}

/// Validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub utility: UtilitySpec,
    pub model: MarketModel,
    pub horizon: f64,
    pub ts: Option<Vec<f64>>,
    pub xs: Option<Vec<f64>>,
    pub ys: Option<Vec<f64>>,
    pub partition: Partition,
    pub scheme_mode: PartialsMode,
    pub fd_fallback: bool,
    pub sim: Option<SimConfig>,
    pub growth_case: Option<GrowthCase>,
    pub c2_multiplier: f64,
    pub sandwich_taus: Vec<f64>,
    pub model_bound_c: f64,
    pub check_y_grid: Option<Vec<f64>>,
    pub growth_grid: GrowthGrid,
    pub growth_eps: f64,
    pub raw: ExperimentConfig,
}

impl Experiment {
    /// Growth case named in the config, else the utility's natural one, else case 1.
    pub fn growth_case(&self) -> GrowthCase {
        self.growth_case
            .or_else(|| self.utility.natural_growth_case())
            .unwrap_or(GrowthCase::Case1)
    }

    /// A grid that must be present and nonempty.
    pub fn required_grid(&self, name: &str) -> Result<&[f64], ConfigError> {
        let g = match name {
            "t" => &self.ts,
            "x" => &self.xs,
            _ => &self.ys,
        };
        match g {
            Some(v) if !v.is_empty() => Ok(v),
            Some(_) => Err(ConfigError::Invalid(format!("grids.{name}: empty grid"))),
            None => Err(ConfigError::Invalid(format!("grids.{name}: missing"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_parses_and_resolves() {
        let cfg = ExperimentConfig::preset("fouque_cv").unwrap();
        let e = cfg.resolve().unwrap();
        assert_eq!(e.utility.risk_aversion(), Some(3.0));
        assert_eq!(e.horizon, 2.0);
        assert_eq!(e.partition.n_intervals(), 4);
        assert!(e.sim.is_some());
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn missing_key_is_reported() {
        let err = ExperimentConfig::from_json(r#"{"market": {"model": "constant", "mu": 0.1, "sigma": 0.2, "b": 0, "a": 1, "rho": 0}, "horizon": 1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("utility"), "{err}");
    }

    #[test]
    fn nested_field_path_is_reported() {
        let text = r#"{"utility": {"family": "power", "gamma": 3}, "market": {"model": "constant", "mu": 0.1, "sigma": 0.2, "b": 0, "a": 1, "rho": 0},
                      "horizon": 1, "simulation": {"n_paths": "many", "dt": 0.01}}"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            ConfigError::Parse { path, .. } => assert_eq!(path, "simulation.n_paths"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn grid_forms() {
        let g: GridSpec = serde_json::from_str("[0.5, 1.0]").unwrap();
        assert_eq!(g.values(), vec![0.5, 1.0]);
        let g: GridSpec = serde_json::from_str(r#"{"start": 0, "stop": 1, "n": 5}"#).unwrap();
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: GridSpec = serde_json::from_str(r#"{"start": 1, "stop": 100, "n": 3, "log": true}"#).unwrap();
        assert!((g.values()[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn scheme_forms() {
        let base = r#"{"utility": {"family": "log"}, "market": {"model": "constant", "mu": 0.1, "sigma": 0.2, "b": 0, "a": 1, "rho": 0}, "horizon": 2"#;
        let e = ExperimentConfig::from_json(&format!(r#"{base}, "scheme": {{"knots": [0, 0.5, 1.0, 1.5, 2.0]}}}}"#))
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(e.partition.knots(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let e = ExperimentConfig::from_json(&format!(r#"{base}, "scheme": {{"n": 8, "mode": "anchor_only"}}}}"#))
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(e.partition.n_intervals(), 8);
        assert_eq!(e.scheme_mode, PartialsMode::AnchorOnly);
        let bad = ExperimentConfig::from_json(&format!(r#"{base}, "scheme": {{"knots": [0, 1.0]}}}}"#)).unwrap();
        assert!(bad.resolve().is_err());
        let empty = ExperimentConfig::from_json(&format!(r#"{base}, "grids": {{"t": []}}}}"#))
            .unwrap()
            .resolve()
            .unwrap();
        assert!(empty.required_grid("t").is_err());
        assert!(empty.required_grid("x").is_err());
    }
}
