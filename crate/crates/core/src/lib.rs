//! Short-horizon approximations of the Merton portfolio problem with a
//! stochastic factor.
//!
//! The crate provides the first-order value approximation `Û = U_T + τ u₁`,
//! explicit sub/super-solution bounds around it, a recursive backward scheme
//! over a time partition, closed-form reference solutions, and a Monte Carlo
//! engine for expected terminal utility under feedback strategies.

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod jet;
pub mod market;
pub mod montecarlo;
pub mod oracle;
pub mod scheme;
pub mod surrogate;
pub mod utility;

pub use error::{Error, Result};
pub use market::{validate_model_bounds, Coefficient, MarketKind, MarketModel};
pub use montecarlo::{
    admissibility_diagnostics, convergence_study, simulate_expected_utility, MCEstimate, SimConfig, SimScheme,
    StrategyMap,
};
pub use oracle::{
    crra_coeffs, crra_exact_portfolio, crra_exact_value, CrraExact, CrraParams,
    MertonParams,
};
pub use scheme::{scheme_portfolio, scheme_value, Partition, PartialsMode, SchemeSurrogate};
pub use surrogate::{
    hjb_residual, pi_from_partials, pi_hat, sandwich, u1, u2, value_hat, SandwichGrid, ValueHat, ValuePartials,
    ValueSurrogate,
};
pub use utility::{check_growth_conditions, GrowthCase, UtilitySpec};
