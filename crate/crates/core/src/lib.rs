//! Stochastic-volatility simulators and constructive ReLU-network
//! approximations of their pricing maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`relu_net`]: network representation and the structural calculus
//!   (identity, linear, parallelization, composition, weighted sums, min/max).
//! * [`approx_blocks`]: certified ε-approximators (piecewise-linear, products,
//!   the Heston factor functions, the rough-Bergomi exponential factor).
//! * [`sv_sim`]: Euler–Maruyama for the general system and cross-correlated
//!   Heston, stopped processes, strong-error measurement.
//! * [`rough_vol`]: Riemann–Liouville Volterra oracle, hybrid scheme,
//!   truncated rough Bergomi.
//! * [`net_builder`]: pricing networks assembled from frozen randomness and
//!   the size audit.
//! * [`pricing`]: payoffs, Monte Carlo pricing, closed-form oracles, sweeps.
//!
//! The guide in `book/` is compiled into the doc-tests of this crate.

pub mod approx_blocks;
pub mod error;
pub mod net_builder;
pub mod pricing;
pub mod quad;
pub mod relu_net;
pub mod rng;
pub mod rough_vol;
pub mod stats;
pub mod sv_sim;

pub use error::{ApproxError, NetError, SimError};
pub use relu_net::{AffineLayer, NetMetrics, ReluNetwork};

/// `ζ(4) = π⁴/90`.
pub const ZETA4: f64 = std::f64::consts::PI * std::f64::consts::PI * std::f64::consts::PI
    * std::f64::consts::PI
    / 90.0;

/// The hybrid-scheme fourth-moment constant `(3/16) ζ(4)`.
pub const C25: f64 = 3.0 / 16.0 * ZETA4;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/approximators.md")]
    mod approximators {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/rough_bergomi.md")]
    mod rough_bergomi {}
    #[doc = include_str!("../../../book/src/pricing_networks.md")]
    mod pricing_networks {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
}
