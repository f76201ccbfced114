//! Heston option pricing, calibration, and neural-network price correction.
//!
//! The crate is organized around a semi-analytic Heston pricer
//! ([`heston`]), an independent Monte Carlo oracle ([`mc`]),
//! derivative-free calibrators ([`optim`]), a small dense-network engine
//! ([`nn`]), a surrogate-pricing workflow ([`surrogate`]), and the
//! PAN/CCN correction pipeline with its error-metric reporting
//! ([`pipeline`]). Market snapshots live in [`market`].

pub mod heston;
pub mod market;
pub mod mc;
pub mod nn;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod surrogate;

pub use heston::{HestonParams, PricingError, QuadratureConfig};
pub use market::{MarketDataError, MarketState, OptionChain, OptionQuote};
pub use mc::{McConfig, McEstimate};
pub use optim::{CalibrationMethod, CalibrationResult, CalibrationWeights, ParamBounds};
