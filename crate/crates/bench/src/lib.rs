//! Shared fixtures for the benchmarks.

use dce_core::params::to_natural;
use dce_core::{NaturalParams, PhysicalParams};

/// SQUID preset at the requested order, with a shorter envelope so the
/// finite-tau oracle stays affordable.
pub fn squid(order: usize, omega0_tau: f64) -> NaturalParams {
    let p = to_natural(&PhysicalParams::squid()).expect("preset is valid");
    p.with_tau(omega0_tau / p.omega0())
        .and_then(|p| p.with_order(order))
        .expect("fixture parameters are valid")
}
