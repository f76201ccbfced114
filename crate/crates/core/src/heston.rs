//! Semi-analytic European call pricing under the Heston model.
//!
//! The characteristic function of ln S_T is exponential-affine,
//!
//!   f(phi) = exp( i*phi*(x + r*tau) + C(tau, phi) + D(tau, phi)*v0 ),
//!
//! with C, D solving Riccati ODEs in tau. We evaluate the closed-form
//! solution in the branch-stable arrangement (ratio g paired with the
//! decaying exponential e^{-d tau}, principal square root with
//! Re(d) >= 0), which keeps the complex logarithm away from its cut for
//! admissible parameters. The difference c - d is formed as
//! -sigma^2 (i*phi + phi^2) / (c + d) rather than by subtraction, so the
//! vol-of-vol -> 0 limit stays accurate to machine precision.
//!
//! Call prices follow from the Fourier inversion
//!
//!   C(S0, K, T) = S0 * P1 - K * e^{-rT} * P2,
//!   Pj = 1/2 + (1/pi) * Int_0^inf Re[ e^{-i phi ln K} fj(phi) / (i phi) ] d phi,
//!
//! with f1(phi) = f(phi - i)/f(-i) and f2 = f, integrated by fixed-node
//! Gauss-Legendre on [lower_offset, upper_limit].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{MarketState, OptionChain, OptionQuote};
use crate::quad::cached_rule;
use crate::rng::normal_cdf;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("parameter out of range: {0}")]
    InvalidParams(String),
    #[error("invalid quadrature config: {0}")]
    InvalidQuadrature(String),
    #[error("numerical overflow evaluating the characteristic function (tau={tau}, |phi|={phi_abs:.3})")]
    NumericalOverflow { tau: f64, phi_abs: f64 },
    #[error("P{index} integral out of [0,1] by {excess:.3e}; increase nodes or the truncation limit")]
    QuadratureFailure { index: u8, excess: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("pricing failed for {failures} of {total} quotes; first: row {first_row}: {first_error}")]
    ChainFailures {
        failures: usize,
        total: usize,
        first_row: usize,
        first_error: String,
    },
}

/// Heston parameter vector (kappa, theta, sigma, rho, v0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean-reversion speed of variance (1/year).
    pub kappa: f64,
    /// Long-run variance level (per year).
    pub theta: f64,
    /// Volatility of variance (1/sqrt(year)).
    pub sigma: f64,
    /// Correlation between the asset and variance drivers, in [-1, 1].
    pub rho: f64,
    /// Initial variance (per year).
    pub v0: f64,
}

impl HestonParams {
    /// Validated constructor: kappa, theta, sigma, v0 > 0 and |rho| <= 1.
    pub fn new(kappa: f64, theta: f64, sigma: f64, rho: f64, v0: f64) -> Result<Self, PricingError> {
        let p = Self { kappa, theta, sigma, rho, v0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        let positive = [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("sigma", self.sigma),
            ("v0", self.v0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PricingError::InvalidParams(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return Err(PricingError::InvalidParams(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// 2*kappa*theta > sigma^2. Reported for diagnostics, never enforced:
    /// market calibrations routinely violate it and the closed form stays valid.
    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa * self.theta > self.sigma * self.sigma
    }

    /// Component order used by bounds, optimizers, and the surrogate.
    pub fn to_array(self) -> [f64; 5] {
        [self.kappa, self.theta, self.sigma, self.rho, self.v0]
    }

    pub fn from_array(x: [f64; 5]) -> Self {
        Self {
            kappa: x[0],
            theta: x[1],
            sigma: x[2],
            rho: x[3],
            v0: x[4],
        }
    }
}

/// Truncation and node count for the P1/P2 integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Upper truncation U of the frequency integral.
    pub upper_limit: f64,
    /// Gauss-Legendre node count per integral.
    pub nodes: usize,
    /// Small positive start replacing phi = 0 (the integrand has a finite
    /// real-part limit there; starting at epsilon leaves negligible mass).
    pub lower_offset: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            upper_limit: 200.0,
            nodes: 1000,
            lower_offset: 1e-8,
        }
    }
}

impl QuadratureConfig {
    /// Wider truncation for hostile parameter corners. The characteristic
    /// function decays like exp(-sqrt(1-rho^2) (v0 + kappa theta tau) phi / sigma),
    /// so short maturities with low variance and high vol-of-vol need a much
    /// larger U than the default to push the truncated tail below the
    /// probability clamp tolerance. Used by dataset generation over wide
    /// parameter boxes.
    pub fn wide() -> Self {
        Self {
            upper_limit: 1000.0,
            nodes: 2000,
            lower_offset: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.lower_offset > 0.0) || !(self.upper_limit > self.lower_offset) {
            return Err(PricingError::InvalidQuadrature(format!(
                "need upper_limit > lower_offset > 0, got [{}, {}]",
                self.lower_offset, self.upper_limit
            )));
        }
        if self.nodes < 64 {
            return Err(PricingError::InvalidQuadrature(format!(
                "need at least 64 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }
}

/// Closed-form Riccati solutions C(tau, phi) and D(tau, phi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiTerms {
    pub c_term: Complex64,
    pub d_term: Complex64,
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Evaluate C and D at (possibly complex) frequency `phi`.
pub fn riccati_terms(
    phi: Complex64,
    tau: f64,
    params: &HestonParams,
) -> Result<RiccatiTerms, PricingError> {
    params.validate()?;
    if !(tau >= 0.0) {
        return Err(PricingError::DomainError(format!("tau must be >= 0, got {tau}")));
    }
    let sigma2 = params.sigma * params.sigma;
    // u = i*phi + phi^2; c = kappa - rho*sigma*i*phi
    let u = I * phi + phi * phi;
    let c = Complex64::new(params.kappa, 0.0) - I * (params.rho * params.sigma) * phi;
    // d = sqrt(c^2 + sigma^2 u), principal branch (Re d >= 0 holds since
    // num_complex's sqrt returns the principal root).
    let d = (c * c + sigma2 * u).sqrt();
    let c_plus_d = c + d;
    // c - d via the discriminant identity; avoids cancellation as sigma -> 0.
    let c_minus_d = -sigma2 * u / c_plus_d;
    let g = c_minus_d / c_plus_d;
    let decay = (-d * tau).exp(); // |e^{-d tau}| <= 1 because Re d >= 0
    let one = Complex64::new(1.0, 0.0);
    let denom = one - g * decay;
    let d_term = (-u / c_plus_d) * (one - decay) / denom;
    let log_term = (denom / (one - g)).ln();
    let c_term = (params.kappa * params.theta)
        * (c_minus_d * tau - 2.0 * log_term)
        / sigma2;
    let out = RiccatiTerms { c_term, d_term };
    if !out.c_term.is_finite() || !out.d_term.is_finite() {
        return Err(PricingError::NumericalOverflow {
            tau,
            phi_abs: phi.norm(),
        });
    }
    Ok(out)
}

/// Risk-neutral characteristic function of ln S_T:
/// exp(i*phi*(ln spot + r*tau) + C + D*v0). Satisfies f(-i) = spot*e^{r tau}.
pub fn char_fn(
    phi: Complex64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
) -> Result<Complex64, PricingError> {
    let terms = riccati_terms(phi, tau, params)?;
    let x = state.spot.ln();
    let exponent = I * phi * (x + state.rate * tau) + terms.c_term + terms.d_term * params.v0;
    let value = exponent.exp();
    if !value.is_finite() {
        return Err(PricingError::NumericalOverflow {
            tau,
            phi_abs: phi.norm(),
        });
    }
    Ok(value)
}

/// Which in-the-money probability to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbId {
    /// Delta-measure probability (numerator CF f(phi - i)/f(-i)).
    P1,
    /// Risk-neutral probability Pr[S_T > K].
    P2,
}

/// P1 or P2 by Fourier inversion over [lower_offset, upper_limit].
pub fn risk_neutral_prob(
    j: ProbId,
    strike: f64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    quad: &QuadratureConfig,
) -> Result<f64, PricingError> {
    let (p1, p2) = both_probs(strike, state, params, tau, quad)?;
    Ok(match j {
        ProbId::P1 => p1,
        ProbId::P2 => p2,
    })
}

/// Shared node sweep for P1 and P2 (both need f(phi) and f(phi - i)).
fn both_probs(
    strike: f64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    quad: &QuadratureConfig,
) -> Result<(f64, f64), PricingError> {
    if !(strike > 0.0) {
        return Err(PricingError::DomainError(format!(
            "strike must be > 0, got {strike}"
        )));
    }
    if !(tau > 0.0) {
        return Err(PricingError::DomainError(format!("tau must be > 0, got {tau}")));
    }
    quad.validate()?;
    let log_k = strike.ln();
    let forward = state.spot * (state.rate * tau).exp(); // = f(-i)
    let rule = cached_rule(quad.nodes);
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    for (phi, w) in rule.mapped(quad.lower_offset, quad.upper_limit) {
        let phase = (-I * (phi * log_k)).exp();
        let f2 = char_fn(Complex64::new(phi, 0.0), state, params, tau)?;
        let f1 = char_fn(Complex64::new(phi, -1.0), state, params, tau)? / forward;
        let denom = I * phi;
        acc1 += w * (phase * f1 / denom).re;
        acc2 += w * (phase * f2 / denom).re;
    }
    let p1 = 0.5 + acc1 / std::f64::consts::PI;
    let p2 = 0.5 + acc2 / std::f64::consts::PI;
    Ok((clamp_prob(p1, 1)?, clamp_prob(p2, 2)?))
}

/// Clamp to [0, 1] when within tolerance; anything further out signals an
/// inadequate truncation/node count.
fn clamp_prob(p: f64, index: u8) -> Result<f64, PricingError> {
    const TOL: f64 = 1e-9;
    if !p.is_finite() || p < -TOL || p > 1.0 + TOL {
        let excess = if p.is_finite() {
            (p.min(0.0)).abs().max((p - 1.0).max(0.0))
        } else {
            f64::INFINITY
        };
        return Err(PricingError::QuadratureFailure { index, excess });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// European call price: S0*P1 - K*e^{-r tau}*P2.
pub fn call_price(
    strike: f64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    quad: &QuadratureConfig,
) -> Result<f64, PricingError> {
    let (p1, p2) = both_probs(strike, state, params, tau, quad)?;
    Ok(state.spot * p1 - strike * (-state.rate * tau).exp() * p2)
}

/// Black-Scholes call, used as a degenerate-limit oracle and CLI reference.
pub fn bs_call(
    strike: f64,
    state: &MarketState,
    vol: f64,
    tau: f64,
) -> Result<f64, PricingError> {
    if !(vol > 0.0) {
        return Err(PricingError::DomainError(format!("vol must be > 0, got {vol}")));
    }
    if !(strike > 0.0) || !(tau > 0.0) {
        return Err(PricingError::DomainError(format!(
            "strike and tau must be > 0, got strike={strike}, tau={tau}"
        )));
    }
    let sqrt_t = tau.sqrt();
    let d1 = ((state.spot / strike).ln() + (state.rate + 0.5 * vol * vol) * tau) / (vol * sqrt_t);
    let d2 = d1 - vol * sqrt_t;
    Ok(state.spot * normal_cdf(d1) - strike * (-state.rate * tau).exp() * normal_cdf(d2))
}

/// Price every quote in a chain, preserving order. Per-quote failures are
/// aggregated into one error naming the first offending quote.
pub fn price_chain(
    chain: &OptionChain,
    params: &HestonParams,
    quad: &QuadratureConfig,
) -> Result<Vec<(OptionQuote, f64)>, PricingError> {
    let mut out = Vec::with_capacity(chain.len());
    let mut failures = 0usize;
    let mut first: Option<(usize, String)> = None;
    for (i, quote) in chain.quotes().iter().enumerate() {
        match call_price(quote.strike, &chain.state, params, quote.maturity, quad) {
            Ok(price) => out.push((*quote, price)),
            Err(e) => {
                failures += 1;
                if first.is_none() {
                    first = Some((i + 1, e.to_string()));
                }
            }
        }
    }
    if let Some((first_row, first_error)) = first {
        return Err(PricingError::ChainFailures {
            failures,
            total: chain.len(),
            first_row,
            first_error,
        });
    }
    Ok(out)
}
