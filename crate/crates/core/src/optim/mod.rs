//! Derivative-free optimizers and the calibration objective.
//!
//! Calibration minimizes the weighted root-mean-square error between model
//! and market prices over the 5-dimensional Heston parameter box
//! (kappa, theta, sigma, rho, v0). Two optimizers are provided: Nelder-Mead
//! (local, sequential) and Differential Evolution (global, population-based,
//! evaluated in parallel with deterministic merge order). Both operate on
//! plain 5-vectors so the standard benchmark functions can exercise them on
//! arbitrary boxes; `calibrate` additionally enforces Heston admissibility
//! on the bounds.

mod de;
mod nelder_mead;

pub use de::{differential_evolution, DeConfig, DeStrategy};
pub use nelder_mead::{nelder_mead, NmConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heston::{call_price, HestonParams, PricingError, QuadratureConfig};
use crate::market::{OptionChain, OptionQuote};

pub const DIM: usize = 5;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("start point outside bounds in component {0}")]
    StartOutOfBounds(usize),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// Box bounds over (kappa, theta, sigma, rho, v0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl ParamBounds {
    /// Plain box: lower < upper componentwise. Heston admissibility is
    /// checked separately where the semantics demand it (`validate_heston`),
    /// so benchmark objectives can run on e.g. [-5, 5]^5.
    pub fn new(lower: [f64; DIM], upper: [f64; DIM]) -> Result<Self, OptimError> {
        for i in 0..DIM {
            if !(lower[i] < upper[i]) {
                return Err(OptimError::InvalidBounds(format!(
                    "component {i}: lower {} must be < upper {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Default calibration box, wide enough for equity-index surfaces.
    pub fn heston_default() -> Self {
        Self {
            lower: [0.1, 0.001, 0.01, -0.99, 0.001],
            upper: [10.0, 1.0, 2.0, 0.99, 1.0],
        }
    }

    /// Require the box to contain only admissible Heston parameters.
    pub fn validate_heston(&self) -> Result<(), OptimError> {
        let names = ["kappa", "theta", "sigma", "rho", "v0"];
        for (i, name) in names.iter().enumerate() {
            if i == 3 {
                if self.lower[3] < -1.0 || self.upper[3] > 1.0 {
                    return Err(OptimError::InvalidBounds(format!(
                        "rho bounds [{}, {}] exceed [-1, 1]",
                        self.lower[3], self.upper[3]
                    )));
                }
            } else if !(self.lower[i] > 0.0) {
                return Err(OptimError::InvalidBounds(format!(
                    "{name} lower bound must be > 0, got {}",
                    self.lower[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64; DIM]) -> bool {
        (0..DIM).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    pub fn clamp(&self, x: &mut [f64; DIM]) {
        for i in 0..DIM {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn center(&self) -> [f64; DIM] {
        std::array::from_fn(|i| 0.5 * (self.lower[i] + self.upper[i]))
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// Per-quote weighting of the calibration objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "values")]
pub enum CalibrationWeights {
    /// Equal weight on every quote.
    Uniform,
    /// Weight proportional to 1 / max(market price, floor); emphasizes
    /// quotes whose observed price is small but reliable.
    InversePrice,
    /// Explicit positive weights, one per quote.
    Custom(Vec<f64>),
}

impl CalibrationWeights {
    /// Resolve to normalized weights (sum 1) for `n` quotes.
    pub fn resolve(&self, quotes: &[OptionQuote]) -> Result<Vec<f64>, OptimError> {
        let n = quotes.len();
        let raw: Vec<f64> = match self {
            CalibrationWeights::Uniform => vec![1.0; n],
            CalibrationWeights::InversePrice => {
                const FLOOR: f64 = 1e-2;
                quotes.iter().map(|q| 1.0 / q.last_price.max(FLOOR)).collect()
            }
            CalibrationWeights::Custom(w) => {
                if w.len() != n {
                    return Err(OptimError::InvalidWeights(format!(
                        "{} custom weights for {} quotes",
                        w.len(),
                        n
                    )));
                }
                w.clone()
            }
        };
        if raw.iter().any(|&w| !(w > 0.0)) {
            return Err(OptimError::InvalidWeights(
                "all weights must be > 0".to_string(),
            ));
        }
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / total).collect())
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: HestonParams,
    /// Weighted RMSE at `params` (square-root form).
    pub objective: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub method: String,
    pub converged: bool,
}

/// Build the weighted-RMSE objective J(eta) over a chain.
///
/// J(eta) = sqrt( sum_i w_i (model_i - market_i)^2 ) with w normalized to
/// sum 1. Pricing failures map to +infinity so the optimizers simply avoid
/// that region. The square root is monotone, so minimizing J is the same
/// problem as minimizing the squared form.
pub fn make_objective<'a, P>(
    chain: &'a OptionChain,
    weights: &CalibrationWeights,
    pricer: P,
) -> Result<impl Fn(&HestonParams) -> f64 + Sync + 'a, OptimError>
where
    P: Fn(&HestonParams, &OptionQuote) -> Result<f64, PricingError> + Sync + 'a,
{
    let weights = weights.resolve(chain.quotes())?;
    Ok(move |params: &HestonParams| -> f64 {
        let mut acc = 0.0;
        for (quote, &w) in chain.quotes().iter().zip(&weights) {
            match pricer(params, quote) {
                Ok(model) if model.is_finite() => {
                    let diff = model - quote.last_price;
                    acc += w * diff * diff;
                }
                _ => return f64::INFINITY,
            }
        }
        acc.sqrt()
    })
}

/// Optimizer choice plus its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CalibrationMethod {
    NelderMead { cfg: NmConfig, start: [f64; DIM] },
    DifferentialEvolution { cfg: DeConfig },
}

/// Calibrate the Heston model to a chain with the semi-analytic pricer.
pub fn calibrate(
    chain: &OptionChain,
    method: &CalibrationMethod,
    bounds: &ParamBounds,
    weights: &CalibrationWeights,
    quad: &QuadratureConfig,
) -> Result<CalibrationResult, OptimError> {
    bounds.validate_heston()?;
    quad.validate()?;
    let state = chain.state.clone();
    let pricer = move |params: &HestonParams, quote: &OptionQuote| {
        call_price(quote.strike, &state, params, quote.maturity, quad)
    };
    let objective = make_objective(chain, weights, pricer)?;
    let vector_objective = |x: &[f64; DIM]| objective(&HestonParams::from_array(*x));
    match method {
        CalibrationMethod::NelderMead { cfg, start } => {
            nelder_mead(&vector_objective, start, cfg, bounds)
        }
        CalibrationMethod::DifferentialEvolution { cfg } => {
            differential_evolution(&vector_objective, bounds, cfg)
        }
    }
}
