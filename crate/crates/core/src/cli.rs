//! Batch front end: subcommands, CSV output and exit codes.
//!
//! Exit codes: 0 success, 1 assumption failure, 2 usage or config error,
//! 3 numerical error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Experiment, ExperimentConfig, StrategyName};
use crate::error::Error;
use crate::market::{validate_model_bounds, MarketKind};
use crate::montecarlo::{convergence_study, simulate_expected_utility, StrategyMap};
use crate::oracle::{exact_surrogate, CrraExact, MertonParams};
use crate::scheme::SchemeSurrogate;
use crate::surrogate::{hjb_residual, pi_from_partials, sandwich, SandwichBounds, SandwichGrid, ValueHat, ValueSurrogate};
use crate::utility::{check_growth_conditions, UtilityFamily};

/// First line of every CSV file.
pub const SCHEMA_LINE: &str = "# horizon-approx schema v1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Assumption(String),
    #[error("numerical error: {0}")]
    Numerical(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assumption(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => CliError::Usage(format!("invalid parameter: {m}")),
            other => CliError::Numerical(other),
        }
    }
}

/// Result of one subcommand.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub csv: String,
    /// Human-readable lines for standard output.
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
    pub assumption_failed: bool,
}

/// Formats a number with 17 significant digits; empty when unavailable.
pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) if v.is_nan() => "NaN".into(),
        Some(v) if v.is_infinite() => if v > 0.0 { "inf" } else { "-inf" }.into(),
        Some(v) => format!("{v:.16e}"),
    }
}

struct CsvOut {
    w: csv::Writer<Vec<u8>>,
    summary: Vec<String>,
}

impl CsvOut {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w, summary: Vec::new() }
    }

    fn row(&mut self, fields: Vec<String>) {
        self.w.write_record(&fields).expect("in-memory write");
    }

    fn summary(&mut self, key: &str, value: String) {
        self.summary.push(format!("# summary,{key},{value}"));
    }

    fn finish(self) -> String {
        let body = String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8");
        let mut s = format!("{SCHEMA_LINE}\n{body}");
        for line in self.summary {
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

fn n(v: f64) -> String {
    fmt_num(Some(v))
}

fn opt(v: Option<f64>) -> String {
    fmt_num(v)
}

/// Growth conditions and coefficient bounds.
pub fn cmd_check(e: &Experiment) -> Result<Report, CliError> {
    let mut rep = Report::default();
    let case = e.growth_case();
    let growth = check_growth_conditions(&e.utility, case, &e.growth_grid, e.growth_eps)?;
    let mut out = CsvOut::new(&["check", "order", "inf", "sup", "bound", "argmax_y", "pass"]);
    rep.lines.push(format!("utility {} against {:?}", e.utility.label(), case));
    for r in &growth.ratios {
        out.row(vec![
            "growth".into(),
            r.order.to_string(),
            n(r.inf),
            n(r.sup),
            n(e.growth_eps),
            String::new(),
            r.pass.to_string(),
        ]);
        rep.lines.push(format!(
            "  ratio k={}: inf {:.6e}, sup {:.6e} -> {}",
            r.order,
            r.inf,
            r.sup,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    let (g_adm, lifted) = case.gamma_admissibility();
    if lifted {
        rep.warnings.push(format!("admissibility exponent lifted to {g_adm}"));
    }
    let ys = e.check_y_grid.clone().or_else(|| e.ys.clone());
    match ys {
        Some(ys) if !ys.is_empty() => {
            let b = validate_model_bounds(&e.model, &ys, e.model_bound_c)?;
            out.row(vec![
                "model_bounds".into(),
                String::new(),
                String::new(),
                n(b.sup),
                n(b.constant),
                n(b.argmax_y),
                b.pass.to_string(),
            ]);
            rep.lines.push(format!(
                "model {}: coefficient bound sum {:.6e} at y = {} against {} -> {}",
                e.model.label(),
                b.sup,
                b.argmax_y,
                b.constant,
                if b.pass { "ok" } else { "exceeded" }
            ));
            if !b.pass {
                rep.warnings.push(format!(
                    "model coefficients exceed the bound {} (sum {:.6e} at y = {})",
                    b.constant, b.sup, b.argmax_y
                ));
            }
        }
        _ => rep.warnings.push("no factor grid given; model bounds not checked".into()),
    }
    rep.assumption_failed = !growth.pass;
    rep.lines.push(format!("growth conditions: {}", if growth.pass { "satisfied" } else { "violated" }));
    rep.csv = out.finish();
    Ok(rep)
}

fn power_cv(e: &Experiment) -> Result<f64, CliError> {
    match (e.utility.family(), e.model.kind()) {
        (UtilityFamily::Power { gamma }, MarketKind::ChackoViceira { .. }) => Ok(*gamma),
        _ => Err(CliError::Usage(
            "table1 needs a power utility and a chacko_viceira market".into(),
        )),
    }
}

/// Exact and approximate value/allocation coefficients at the table times.
pub fn cmd_table1(e: &Experiment) -> Result<Report, CliError> {
    let gamma = power_cv(e)?;
    let t1 = e.raw.table1.clone().unwrap_or_default();
    let ts = t1.ts.unwrap_or_else(|| vec![1.5, 1.9]);
    let y = match (t1.y, e.model.kind()) {
        (Some(y), _) => y,
        (None, MarketKind::ChackoViceira { m, .. }) => *m,
        (None, _) => 1.0,
    };
    let exact = CrraExact::new(gamma, &e.model, e.horizon)?;
    let hat = ValueHat::new(e.utility.clone(), e.model.clone(), e.horizon)?;
    let mut out = CsvOut::new(&["t", "T", "U_coeff", "Uhat_coeff", "abs_err", "piU_coeff", "pihat_coeff", "pi_abs_err"]);
    let mut rep = Report::default();
    let value_scale = 2f64.powf(1.0 - gamma);
    for &t in &ts {
        let pe1 = exact.partials(t, 1.0, y)?;
        let ph1 = hat.partials(t, 1.0, y)?;
        let pi_e1 = pi_from_partials(&pe1, &e.model, y)?;
        let pi_h1 = pi_from_partials(&ph1, &e.model, y)?;
        // shape check at x = 2: values scale as x^(1-γ), allocations as x
        let pe2 = exact.partials(t, 2.0, y)?;
        let ph2 = hat.partials(t, 2.0, y)?;
        let checks = [
            (pe2.value / pe1.value, value_scale),
            (ph2.value / ph1.value, value_scale),
            (pi_from_partials(&pe2, &e.model, y)? / pi_e1, 2.0),
            (pi_from_partials(&ph2, &e.model, y)? / pi_h1, 2.0),
        ];
        for (got, want) in checks {
            if ((got - want) / want).abs() > 1e-8 {
                return Err(CliError::Numerical(Error::Evaluation(format!(
                    "coefficient shape check failed at t = {t}: ratio {got} against {want}"
                ))));
            }
        }
        out.row(vec![
            n(t),
            n(e.horizon),
            n(pe1.value),
            n(ph1.value),
            n((pe1.value - ph1.value).abs()),
            n(pi_e1),
            n(pi_h1),
            n((pi_e1 - pi_h1).abs()),
        ]);
        rep.lines.push(format!(
            "t = {t}: U ≈ {:.6}/x^{}, Û ≈ {:.6}/x^{}, π ≈ {:.6}x, π̂ ≈ {:.6}x",
            pe1.value,
            gamma - 1.0,
            ph1.value,
            gamma - 1.0,
            pi_e1,
            pi_h1
        ));
    }
    rep.csv = out.finish();
    Ok(rep)
}

fn sandwich_for(e: &Experiment, xs: &[f64], ys: &[f64]) -> Result<SandwichBounds, CliError> {
    Ok(sandwich(
        &e.utility,
        &e.model,
        e.horizon,
        e.growth_case(),
        &SandwichGrid {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            taus: e.sandwich_taus.clone(),
        },
        e.c2_multiplier,
    )?)
}

fn scheme_for(e: &Experiment) -> SchemeSurrogate {
    SchemeSurrogate::new(e.utility.clone(), e.model.clone(), e.partition.clone())
        .with_mode(e.scheme_mode)
        .with_fd_fallback(e.fd_fallback)
}

/// Evaluation failures become NaN cells and are counted.
struct Soft {
    failures: usize,
}

impl Soft {
    fn get(&mut self, r: crate::Result<f64>) -> f64 {
        r.unwrap_or_else(|_| {
            self.failures += 1;
            f64::NAN
        })
    }
}

/// Per-point values, bounds and allocations over the configured grids.
pub fn cmd_sweep(e: &Experiment) -> Result<Report, CliError> {
    let ts = e.required_grid("t")?.to_vec();
    let xs = e.required_grid("x")?.to_vec();
    let ys = e.required_grid("y")?.to_vec();
    let sb = sandwich_for(e, &xs, &ys)?;
    let exact = exact_surrogate(&e.utility, &e.model, e.horizon);
    let hat = ValueHat::new(e.utility.clone(), e.model.clone(), e.horizon)?;
    let scheme = scheme_for(e);
    let gamma = e.utility.risk_aversion();
    let mut out = CsvOut::new(&[
        "t", "x", "y", "U_exact", "U_hat", "U_lower", "U_upper", "pi_exact", "pi_hat", "pi_merton", "pi_scheme",
        "hjb_residual_hat", "within_delta",
    ]);
    let mut soft = Soft { failures: 0 };
    let m = &e.model;
    for &t in &ts {
        for &x in &xs {
            for &y in &ys {
                let (u_exact, pi_exact) = match &exact {
                    Some(s) => (
                        Some(soft.get(s.value(t, x, y))),
                        Some(soft.get(s.partials(t, x, y).and_then(|p| pi_from_partials(&p, m, y)))),
                    ),
                    None => (None, None),
                };
                let pi_merton = gamma.map(|g| soft.get(MertonParams::frozen(g, m, y, e.horizon).and_then(|mp| {
                    crate::oracle::merton_portfolio(x, &mp)
                })));
                let within = sb.delta.is_some_and(|d| e.horizon - t < d);
                out.row(vec![
                    n(t),
                    n(x),
                    n(y),
                    opt(u_exact),
                    n(soft.get(hat.value(t, x, y))),
                    n(soft.get(sb.lower.value(t, x, y))),
                    n(soft.get(sb.upper.value(t, x, y))),
                    opt(pi_exact),
                    n(soft.get(hat.partials(t, x, y).and_then(|p| pi_from_partials(&p, m, y)))),
                    opt(pi_merton),
                    n(soft.get(scheme.portfolio(t, x, y))),
                    n(soft.get(hjb_residual(&hat, t, x, y, m))),
                    u8::from(within).to_string(),
                ]);
            }
        }
    }
    let mut rep = Report::default();
    out.summary("c2", n(sb.c2));
    out.summary("delta", opt(sb.delta));
    if let Some(ex) = &exact {
        let conv = e.raw.sweep.as_ref().and_then(|s| s.convergence.clone());
        let (cx, cy, cts) = match conv {
            Some(c) => (c.x, c.y, c.ts.values()),
            None => (xs[0], ys[0], ts.iter().cloned().filter(|&t| t < e.horizon && e.horizon - t <= 0.5).collect()),
        };
        if cts.len() >= 2 {
            let fit = convergence_study(
                |t| Ok(ex.value(t, cx, cy)? - hat.value(t, cx, cy)?),
                &cts,
                e.horizon,
            )?;
            rep.warnings.extend(fit.warnings.iter().cloned());
            out.summary("convergence_slope", n(fit.slope));
            rep.lines.push(format!("convergence slope {:.4} at x = {cx}, y = {cy}", fit.slope));
        }
    }
    if soft.failures > 0 {
        rep.warnings.push(format!("{} cells could not be evaluated and were written as NaN", soft.failures));
    }
    rep.lines.push(format!(
        "c2 = {:.6e}, delta = {}",
        sb.c2,
        sb.delta.map_or("none".into(), |d| d.to_string())
    ));
    rep.csv = out.finish();
    Ok(rep)
}

/// Monte Carlo expected utility of the configured strategies.
pub fn cmd_simulate(e: &Experiment, seed: Option<u64>) -> Result<Report, CliError> {
    let mut cfg = e
        .sim
        .clone()
        .ok_or_else(|| CliError::Usage("simulate needs a `simulation` section".into()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sc = e
        .raw
        .simulate
        .clone()
        .ok_or_else(|| CliError::Usage("simulate needs a `simulate` section".into()))?;
    if sc.t0.is_empty() {
        return Err(CliError::Usage("simulate.t0: empty list".into()));
    }
    let names = sc.strategies.clone().unwrap_or_else(|| vec![StrategyName::PiHat]);
    let xs = e.xs.clone().filter(|v| !v.is_empty()).unwrap_or_else(|| vec![sc.x0]);
    let ys = e.ys.clone().filter(|v| !v.is_empty()).unwrap_or_else(|| vec![sc.y0]);
    let sb = sandwich_for(e, &xs, &ys)?;
    let exact = exact_surrogate(&e.utility, &e.model, e.horizon);
    let m = &e.model;
    let mut out = CsvOut::new(&[
        "t0", "strategy", "mc_mean", "mc_se", "exact_J", "gap", "bound_c2_dt2_h", "n_paths", "n_effective",
        "min_wealth", "floor_hit_fraction", "reflections", "moment_quadratic", "moment_weighted", "sup_proportional",
    ]);
    let mut rep = Report::default();
    for &t0 in &sc.t0 {
        for name in &names {
            let strategy = match name {
                StrategyName::PiHat => StrategyMap::pi_hat(&e.utility, m, e.horizon)?,
                StrategyName::Zero => StrategyMap::zero(),
                StrategyName::PiScheme => {
                    StrategyMap::from_surrogate("pi_scheme", Arc::new(scheme_for(e)), m.clone())
                }
                StrategyName::PiMerton => match e.utility.risk_aversion() {
                    Some(g) => StrategyMap::merton(g, m),
                    None => return Err(CliError::Usage("pi_merton needs a constant risk aversion".into())),
                },
                StrategyName::PiExact => match exact_surrogate(&e.utility, m, e.horizon) {
                    Some(s) => StrategyMap::from_surrogate("pi_exact", Arc::from(s), m.clone()),
                    None => return Err(CliError::Usage("no exact value function for this utility and market".into())),
                },
            };
            let est = simulate_expected_utility(&strategy, &e.utility, m, t0, sc.x0, sc.y0, e.horizon, &cfg)?;
            let ex = match &exact {
                Some(s) => Some(s.value(t0, sc.x0, sc.y0)?),
                None => None,
            };
            let tau = e.horizon - t0;
            out.row(vec![
                n(t0),
                strategy.label().to_string(),
                n(est.mean),
                n(est.se),
                opt(ex),
                opt(ex.map(|v| est.mean - v)),
                n(sb.error_bound(tau, sc.x0)),
                est.n_paths.to_string(),
                est.n_effective.to_string(),
                n(est.min_wealth),
                n(est.floor_hit_fraction),
                est.reflections.to_string(),
                n(est.moment_quadratic),
                n(est.moment_weighted),
                n(est.sup_proportional),
            ]);
            rep.lines.push(format!(
                "t0 = {t0}, {}: mean {:.6} ± {:.2e}{}",
                strategy.label(),
                est.mean,
                est.se,
                ex.map_or(String::new(), |v| format!(" (exact {v:.6})"))
            ));
        }
    }
    rep.csv = out.finish();
    Ok(rep)
}

/// Scheme value, partials and allocation over the configured grids.
pub fn cmd_scheme_eval(e: &Experiment) -> Result<Report, CliError> {
    let ts = e.required_grid("t")?.to_vec();
    let xs = e.required_grid("x")?.to_vec();
    let ys = e.required_grid("y")?.to_vec();
    let scheme = scheme_for(e);
    let exact = exact_surrogate(&e.utility, &e.model, e.horizon);
    let m = &e.model;
    let mut out = CsvOut::new(&[
        "t", "x", "y", "value", "pi", "v_t", "v_x", "v_y", "v_xx", "v_xy", "v_yy", "U_exact", "pi_exact",
    ]);
    for &t in &ts {
        for &x in &xs {
            for &y in &ys {
                let p = scheme.partials(t, x, y)?;
                let pi = pi_from_partials(&p, m, y)?;
                let (ue, pe) = match &exact {
                    Some(s) => {
                        let q = s.partials(t, x, y)?;
                        (Some(q.value), Some(pi_from_partials(&q, m, y)?))
                    }
                    None => (None, None),
                };
                out.row(vec![
                    n(t),
                    n(x),
                    n(y),
                    n(p.value),
                    n(pi),
                    n(p.t),
                    n(p.x),
                    n(p.y),
                    n(p.xx),
                    n(p.xy),
                    n(p.yy),
                    opt(ue),
                    opt(pe),
                ]);
            }
        }
    }
    out.summary("n_intervals", e.partition.n_intervals().to_string());
    out.summary("mode", format!("{:?}", scheme.mode()));
    let mut rep = Report::default();
    if scheme.is_lower_accuracy() {
        out.summary("accuracy", "finite_difference_fallback".into());
        rep.warnings
            .push("utility derivatives beyond the supplied order come from finite differences (lower accuracy)".into());
    }
    rep.csv = out.finish();
    Ok(rep)
}

#[derive(Debug, Parser)]
#[command(name = "horizon-approx", version, about = "Short-horizon portfolio value approximations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check growth conditions and model coefficient bounds.
    Check(CommonArgs),
    /// Reproduce the value/allocation comparison table.
    Table1(CommonArgs),
    /// Values, bounds and allocations over the configured grids.
    Sweep(CommonArgs),
    /// Monte Carlo expected utility of feedback strategies.
    Simulate(CommonArgs),
    /// Evaluate the recursive scheme over the configured grids.
    SchemeEval(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled parameter set (fouque_cv).
    #[arg(long)]
    preset: Option<String>,
    /// CSV output path; defaults to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(a: &CommonArgs) -> Result<Experiment, CliError> {
    let cfg = match (&a.config, &a.preset) {
        (Some(p), _) => ExperimentConfig::from_path(p)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(CliError::Usage("give --config or --preset".into())),
    };
    Ok(cfg.resolve()?)
}

fn dispatch(command: &Command) -> Result<(Report, &CommonArgs, bool), CliError> {
    let (args, is_check) = match command {
        Command::Check(a) => (a, true),
        Command::Table1(a) | Command::Sweep(a) | Command::Simulate(a) | Command::SchemeEval(a) => (a, false),
    };
    let e = load(args)?;
    let rep = match command {
        Command::Check(_) => cmd_check(&e)?,
        Command::Table1(_) => cmd_table1(&e)?,
        Command::Sweep(_) => cmd_sweep(&e)?,
        Command::Simulate(_) => cmd_simulate(&e, args.seed)?,
        Command::SchemeEval(_) => cmd_scheme_eval(&e)?,
    };
    let out = args.out.clone().or_else(|| if is_check { None } else { e.raw.output.clone() });
    if let Some(path) = &out {
        std::fs::write(path, &rep.csv).map_err(|err| CliError::Usage(format!("cannot write {}: {err}", path.display())))?;
    }
    Ok((rep, args, is_check || out.is_some()))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut so = stdout.lock();
    match dispatch(&cli.command) {
        Ok((rep, _, csv_elsewhere)) => {
            if csv_elsewhere {
                for l in &rep.lines {
                    let _ = writeln!(so, "{l}");
                }
            } else {
                let _ = so.write_all(rep.csv.as_bytes());
            }
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            if rep.assumption_failed {
                eprintln!("error: assumption check failed");
                1
            } else {
                0
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
