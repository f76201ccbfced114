//! Independent Monte Carlo Heston simulator, used as the ground-truth
//! oracle for the semi-analytic pricer and exposed through the CLI for
//! cross-checks.
//!
//! The scheme is Euler with full truncation (Lord et al.): the variance
//! path may go negative, but max(v, 0) is substituted in both the drift
//! and the diffusion, so the variance actually used is never negative.
//! Log-spot is stepped exactly in x = ln S:
//!
//!   x' = x + (r - v+/2) dt + sqrt(v+ dt) * z1
//!   v' = v + kappa (theta - v+) dt + sigma sqrt(v+ dt) * (rho z1 + sqrt(1-rho^2) z2)
//!
//! Every path draws from its own counter-based substream of the seed, so
//! the estimate is bit-identical regardless of how paths are distributed
//! over threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heston::HestonParams;
use crate::market::MarketState;
use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters for simulation: {0}")]
    InvalidParams(String),
}

/// Discretization scheme. Only full-truncation Euler is implemented; the
/// enum exists so configs name their scheme explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McScheme {
    EulerFullTruncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: McScheme,
}

impl McConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Result<Self, McError> {
        let cfg = Self {
            n_paths,
            n_steps,
            seed,
            scheme: McScheme::EulerFullTruncation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.n_paths < 1000 {
            return Err(McError::InvalidConfig(format!(
                "n_paths must be >= 1000, got {}",
                self.n_paths
            )));
        }
        if self.n_steps < 10 {
            return Err(McError::InvalidConfig(format!(
                "n_steps must be >= 10, got {}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// Complex-valued estimate with per-component standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCharFnEstimate {
    pub re: f64,
    pub im: f64,
    pub std_error_re: f64,
    pub std_error_im: f64,
    pub n_paths: usize,
}

/// Bounds for simulation are relaxed relative to the pricer: sigma, theta
/// and v0 may be exactly zero (degenerate deterministic cases).
fn validate_relaxed(params: &HestonParams) -> Result<(), McError> {
    let non_negative = [
        ("kappa", params.kappa),
        ("theta", params.theta),
        ("sigma", params.sigma),
        ("v0", params.v0),
    ];
    for (name, value) in non_negative {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(McError::InvalidParams(format!(
                "{name} must be >= 0, got {value}"
            )));
        }
    }
    if !(params.rho >= -1.0 && params.rho <= 1.0) {
        return Err(McError::InvalidParams(format!(
            "rho must lie in [-1, 1], got {}",
            params.rho
        )));
    }
    Ok(())
}

/// Simulate one terminal log-spot given the path's private stream.
#[inline]
fn terminal_log_spot(
    rng: &mut CounterRng,
    x0: f64,
    rate: f64,
    params: &HestonParams,
    tau: f64,
    n_steps: usize,
) -> f64 {
    let dt = tau / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let rho = params.rho;
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut x = x0;
    let mut v = params.v0;
    for _ in 0..n_steps {
        let z1 = rng.next_normal();
        let z2 = rng.next_normal();
        let v_plus = v.max(0.0);
        let vol = (v_plus).sqrt();
        x += (rate - 0.5 * v_plus) * dt + vol * sqrt_dt * z1;
        v += params.kappa * (params.theta - v_plus) * dt
            + params.sigma * vol * sqrt_dt * (rho * z1 + rho_bar * z2);
    }
    x
}

/// Map every path to a statistic, in parallel, in deterministic path order.
fn sample_paths<T, F>(
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    cfg: &McConfig,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync,
{
    let x0 = state.spot.ln();
    let rate = state.rate;
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = CounterRng::substream(cfg.seed, path as u64);
            let x_t = terminal_log_spot(&mut rng, x0, rate, params, tau, cfg.n_steps);
            f(x_t)
        })
        .collect()
}

/// Two-pass mean / standard error; exact zero spread yields exactly zero SE.
fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    if samples.iter().all(|&x| x == samples[0]) {
        // Degenerate sample (e.g. deterministic paths): report it exactly.
        return (samples[0], 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ssr: f64 = samples.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let variance = ssr / (n - 1.0);
    (mean, (variance / n).sqrt())
}

/// Monte Carlo price of a European call.
pub fn mc_call_price(
    strike: f64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    cfg.validate()?;
    validate_relaxed(params)?;
    if !(tau > 0.0) {
        return Err(McError::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    let discount = (-state.rate * tau).exp();
    let payoffs = sample_paths(state, params, tau, cfg, |x_t| {
        discount * (x_t.exp() - strike).max(0.0)
    });
    let (value, std_error) = mean_and_se(&payoffs);
    Ok(McEstimate {
        value,
        std_error,
        n_paths: cfg.n_paths,
    })
}

/// Monte Carlo estimate of E[e^{i phi ln S_T}] for real phi.
pub fn mc_char_fn(
    phi: f64,
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    cfg: &McConfig,
) -> Result<McCharFnEstimate, McError> {
    cfg.validate()?;
    validate_relaxed(params)?;
    if !(tau > 0.0) {
        return Err(McError::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    let samples: Vec<(f64, f64)> = sample_paths(state, params, tau, cfg, |x_t| {
        ((phi * x_t).cos(), (phi * x_t).sin())
    });
    let re_samples: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let im_samples: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (re, se_re) = mean_and_se(&re_samples);
    let (im, se_im) = mean_and_se(&im_samples);
    Ok(McCharFnEstimate {
        re,
        im,
        std_error_re: se_re,
        std_error_im: se_im,
        n_paths: cfg.n_paths,
    })
}

/// Sample mean of the discounted terminal spot (martingale diagnostic).
pub fn mc_discounted_spot(
    state: &MarketState,
    params: &HestonParams,
    tau: f64,
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    cfg.validate()?;
    validate_relaxed(params)?;
    let discount = (-state.rate * tau).exp();
    let samples = sample_paths(state, params, tau, cfg, |x_t| discount * x_t.exp());
    let (value, std_error) = mean_and_se(&samples);
    Ok(McEstimate {
        value,
        std_error,
        n_paths: cfg.n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> MarketState {
        MarketState::new(100.0, 0.03, "2025-02-07").unwrap()
    }

    fn params() -> HestonParams {
        HestonParams::new(2.0, 0.04, 0.3, -0.7, 0.04).unwrap()
    }

    #[test]
    fn degenerate_paths_give_exact_intrinsic_and_zero_se() {
        let p = HestonParams {
            kappa: 2.0,
            theta: 0.0,
            sigma: 0.0,
            rho: 0.0,
            v0: 0.0,
        };
        let cfg = McConfig::new(1000, 10, 1).unwrap();
        let est = mc_call_price(90.0, &state(), &p, 0.5, &cfg).unwrap();
        let expected = 100.0 - 90.0 * (-0.03_f64 * 0.5).exp();
        assert!((est.value - expected).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn fixed_seed_reruns_are_bit_identical() {
        let cfg = McConfig::new(2000, 20, 99).unwrap();
        let a = mc_call_price(100.0, &state(), &params(), 0.5, &cfg).unwrap();
        let b = mc_call_price(100.0, &state(), &params(), 0.5, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());

        let ca = mc_char_fn(1.5, &state(), &params(), 0.5, &cfg).unwrap();
        let cb = mc_char_fn(1.5, &state(), &params(), 0.5, &cfg).unwrap();
        assert_eq!(ca.re.to_bits(), cb.re.to_bits());
        assert_eq!(ca.im.to_bits(), cb.im.to_bits());
    }

    #[test]
    fn char_fn_at_zero_frequency_is_exactly_one() {
        let cfg = McConfig::new(1000, 10, 3).unwrap();
        let est = mc_char_fn(0.0, &state(), &params(), 0.5, &cfg).unwrap();
        assert_eq!(est.re, 1.0);
        assert_eq!(est.im, 0.0);
        assert_eq!(est.std_error_re, 0.0);
        assert_eq!(est.std_error_im, 0.0);
    }

    #[test]
    fn quadrupling_paths_halves_standard_error() {
        let base = McConfig::new(20_000, 50, 11).unwrap();
        let quad = McConfig::new(80_000, 50, 12).unwrap();
        let a = mc_call_price(100.0, &state(), &params(), 0.5, &base).unwrap();
        let b = mc_call_price(100.0, &state(), &params(), 0.5, &quad).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!(
            (ratio - 2.0).abs() < 0.4,
            "expected SE ratio near 2, got {ratio}"
        );
    }

    #[test]
    fn zero_vol_of_vol_matches_lognormal_char_fn() {
        // sigma = 0 and v0 = theta freeze the variance, so ln S_T is normal
        // with mean x0 + (r - v0/2) tau and variance v0 tau.
        let p = HestonParams {
            kappa: 2.0,
            theta: 0.04,
            sigma: 0.0,
            rho: 0.0,
            v0: 0.04,
        };
        let cfg = McConfig::new(200_000, 50, 21).unwrap();
        let tau = 0.5;
        let mu = 100.0_f64.ln() + (0.03 - 0.02) * tau;
        let s2 = 0.04 * tau;
        for &phi in &[0.5_f64, 1.5] {
            let exact_re = (-0.5 * phi * phi * s2).exp() * (phi * mu).cos();
            let exact_im = (-0.5 * phi * phi * s2).exp() * (phi * mu).sin();
            let est = mc_char_fn(phi, &state(), &p, tau, &cfg).unwrap();
            assert!(
                (est.re - exact_re).abs() <= 3.0 * est.std_error_re,
                "phi={phi}: re {} vs {exact_re} (3se={})",
                est.re,
                3.0 * est.std_error_re
            );
            assert!(
                (est.im - exact_im).abs() <= 3.0 * est.std_error_im,
                "phi={phi}: im {} vs {exact_im} (3se={})",
                est.im,
                3.0 * est.std_error_im
            );
        }
    }

    #[test]
    fn discounted_spot_is_a_martingale_in_sample() {
        let cfg = McConfig::new(100_000, 100, 31).unwrap();
        for p in [
            params(),
            HestonParams::new(1.0, 0.09, 0.6, -0.3, 0.06).unwrap(),
        ] {
            let est = mc_discounted_spot(&state(), &p, 0.5, &cfg).unwrap();
            assert!(
                (est.value - 100.0).abs() <= 3.0 * est.std_error,
                "mean {} se {}",
                est.value,
                est.std_error
            );
        }
    }

    #[test]
    fn full_truncation_never_uses_negative_variance() {
        // Drive the variance hard negative: with full truncation the used
        // variance v+ is clipped, so diffusion terms stay real. A NaN in the
        // output would betray sqrt of a negative number.
        let p = HestonParams {
            kappa: 0.5,
            theta: 0.01,
            sigma: 1.5,
            rho: -0.9,
            v0: 0.01,
        };
        let cfg = McConfig::new(5000, 20, 41).unwrap();
        let est = mc_call_price(100.0, &state(), &p, 1.0, &cfg).unwrap();
        assert!(est.value.is_finite());
        assert!(est.std_error.is_finite());
    }

    #[test]
    fn config_minimums_enforced() {
        assert!(McConfig::new(999, 10, 0).is_err());
        assert!(McConfig::new(1000, 9, 0).is_err());
        assert!(McConfig::new(1000, 10, 0).is_ok());
    }
}
