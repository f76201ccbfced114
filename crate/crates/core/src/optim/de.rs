//! Differential Evolution on a bounded box.
//!
//! Synchronous DE: each generation builds one trial vector per member from
//! the current population (mutant eta_a + F * (eta_b - eta_c), binomial
//! crossover with one forced coordinate), evaluates all trials, then applies
//! greedy replacement. All random draws happen sequentially up front, so
//! trial evaluation can run in parallel and the result is identical for any
//! thread count. Out-of-bounds mutant coordinates are resampled uniformly
//! inside the box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CalibrationResult, OptimError, ParamBounds, DIM};
use crate::heston::HestonParams;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeStrategy {
    /// Base vector drawn at random (rand/1/bin).
    Rand1Bin,
    /// Base vector is the current best member (best/1/bin).
    Best1Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub pop_size: usize,
    /// Differential weight F >= 0; scales the mutation step.
    pub f_weight: f64,
    /// Crossover probability Cr in [0, 1].
    pub crossover: f64,
    pub strategy: DeStrategy,
    pub max_gens: usize,
    /// Stop when the population's objective spread (max - min) falls below.
    pub tol: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            pop_size: 40,
            f_weight: 0.8,
            crossover: 0.9,
            strategy: DeStrategy::Rand1Bin,
            max_gens: 300,
            tol: 1e-10,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.pop_size < 8 {
            return Err(OptimError::InvalidConfig(format!(
                "pop_size must be >= 8, got {}",
                self.pop_size
            )));
        }
        if !(self.f_weight >= 0.0) {
            return Err(OptimError::InvalidConfig(format!(
                "f_weight must be >= 0, got {}",
                self.f_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(OptimError::InvalidConfig(format!(
                "crossover must be in [0, 1], got {}",
                self.crossover
            )));
        }
        Ok(())
    }
}

/// Mutant vector eta_a + F * (eta_b - eta_c). Exposed for direct testing of
/// the mutation arithmetic.
pub(crate) fn mutant(a: &[f64; DIM], b: &[f64; DIM], c: &[f64; DIM], f_weight: f64) -> [f64; DIM] {
    std::array::from_fn(|i| a[i] + f_weight * (b[i] - c[i]))
}

/// Minimize `objective` over `bounds`.
pub fn differential_evolution<F>(
    objective: &F,
    bounds: &ParamBounds,
    cfg: &DeConfig,
) -> Result<CalibrationResult, OptimError>
where
    F: Fn(&[f64; DIM]) -> f64 + Sync,
{
    cfg.validate()?;
    let np = cfg.pop_size;
    let mut rng = CounterRng::substream(cfg.seed, DE_STREAM);

    // Uniform initial population, member-major draw order.
    let mut population: Vec<[f64; DIM]> = (0..np)
        .map(|_| std::array::from_fn(|i| rng.next_range(bounds.lower[i], bounds.upper[i])))
        .collect();
    let mut fitness: Vec<f64> = population.par_iter().map(|x| objective(x)).collect();
    let mut evaluations = np;

    let mut generations = 0usize;
    let mut converged = false;
    for _ in 0..cfg.max_gens {
        let spread = population_spread(&fitness);
        if spread < cfg.tol {
            converged = true;
            break;
        }
        generations += 1;

        let best_idx = argmin(&fitness);

        // Draw all decisions sequentially, then evaluate trials in parallel.
        let trials: Vec<[f64; DIM]> = (0..np)
            .map(|i| {
                let a = match cfg.strategy {
                    DeStrategy::Best1Bin => best_idx,
                    DeStrategy::Rand1Bin => distinct_index(&mut rng, np, &[i]),
                };
                let b = distinct_index(&mut rng, np, &[i, a]);
                let c = distinct_index(&mut rng, np, &[i, a, b]);
                let mut m = mutant(&population[a], &population[b], &population[c], cfg.f_weight);
                for k in 0..DIM {
                    if m[k] < bounds.lower[k] || m[k] > bounds.upper[k] {
                        m[k] = rng.next_range(bounds.lower[k], bounds.upper[k]);
                    }
                }
                let forced = rng.next_below(DIM);
                std::array::from_fn(|k| {
                    if k == forced || rng.next_f64() < cfg.crossover {
                        m[k]
                    } else {
                        population[i][k]
                    }
                })
            })
            .collect();

        let trial_fitness: Vec<f64> = trials.par_iter().map(|x| objective(x)).collect();
        evaluations += np;

        for i in 0..np {
            if trial_fitness[i] <= fitness[i] {
                population[i] = trials[i];
                fitness[i] = trial_fitness[i];
            }
        }
    }

    let best_idx = argmin(&fitness);
    Ok(CalibrationResult {
        params: HestonParams::from_array(population[best_idx]),
        objective: fitness[best_idx],
        evaluations,
        iterations: generations,
        method: "differential_evolution".to_string(),
        converged,
    })
}

// Substream tag separating DE draws from other consumers of a seed.
const DE_STREAM: u64 = 0x4445;

fn population_spread(fitness: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &f in fitness {
        lo = lo.min(f);
        hi = hi.max(f);
    }
    hi - lo
}

fn argmin(fitness: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..fitness.len() {
        if fitness[i] < fitness[best] {
            best = i;
        }
    }
    best
}

fn distinct_index(rng: &mut CounterRng, n: usize, taken: &[usize]) -> usize {
    loop {
        let candidate = rng.next_below(n);
        if !taken.contains(&candidate) {
            return candidate;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_arithmetic_matches_displayed_formula() {
        // eta_a = (1,1), eta_b = (2,0), eta_c = (0,2), F = 0.5 -> (2, 0)
        let a = [1.0, 1.0, 0.0, 0.0, 0.0];
        let b = [2.0, 0.0, 0.0, 0.0, 0.0];
        let c = [0.0, 2.0, 0.0, 0.0, 0.0];
        let m = mutant(&a, &b, &c, 0.5);
        assert_eq!(m[0], 2.0);
        assert_eq!(m[1], 0.0);
    }

    #[test]
    fn sphere_benchmark_converges() {
        let bounds = ParamBounds::new([-5.0; DIM], [5.0; DIM]).unwrap();
        let objective = |x: &[f64; DIM]| x.iter().map(|v| v * v).sum::<f64>();
        let cfg = DeConfig {
            pop_size: 40,
            f_weight: 0.8,
            crossover: 0.9,
            max_gens: 200,
            tol: 0.0,
            seed: 7,
            strategy: DeStrategy::Rand1Bin,
        };
        let result = differential_evolution(&objective, &bounds, &cfg).unwrap();
        assert!(
            result.objective < 1e-6,
            "objective {} after {} generations",
            result.objective,
            result.iterations
        );
        assert!(bounds.contains(&result.params.to_array()));
    }

    #[test]
    fn fixed_seed_reruns_are_identical() {
        let bounds = ParamBounds::new([-5.0; DIM], [5.0; DIM]).unwrap();
        let objective = |x: &[f64; DIM]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - i as f64 * 0.3).powi(2))
                .sum::<f64>()
        };
        let cfg = DeConfig {
            max_gens: 50,
            seed: 123,
            tol: 0.0,
            ..DeConfig::default()
        };
        let a = differential_evolution(&objective, &bounds, &cfg).unwrap();
        let b = differential_evolution(&objective, &bounds, &cfg).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.params, b.params);
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn best_objective_is_monotone_across_generations() {
        // Run the same config with increasing generation budgets; the best
        // value must never get worse (greedy replacement).
        let bounds = ParamBounds::new([-5.0; DIM], [5.0; DIM]).unwrap();
        let objective = |x: &[f64; DIM]| x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        let mut last = f64::INFINITY;
        for gens in [5, 10, 20, 40, 80] {
            let cfg = DeConfig {
                max_gens: gens,
                seed: 5,
                tol: 0.0,
                ..DeConfig::default()
            };
            let result = differential_evolution(&objective, &bounds, &cfg).unwrap();
            assert!(result.objective <= last + 1e-15);
            last = result.objective;
        }
    }

    #[test]
    fn best1bin_also_converges() {
        let bounds = ParamBounds::new([-5.0; DIM], [5.0; DIM]).unwrap();
        let objective = |x: &[f64; DIM]| x.iter().map(|v| v * v).sum::<f64>();
        let cfg = DeConfig {
            strategy: DeStrategy::Best1Bin,
            max_gens: 150,
            seed: 11,
            tol: 0.0,
            ..DeConfig::default()
        };
        let result = differential_evolution(&objective, &bounds, &cfg).unwrap();
        assert!(result.objective < 1e-6);
    }

    #[test]
    fn spread_tolerance_stops_early_and_flags_convergence() {
        let bounds = ParamBounds::new([-5.0; DIM], [5.0; DIM]).unwrap();
        let objective = |_: &[f64; DIM]| 3.0;
        let cfg = DeConfig {
            max_gens: 100,
            tol: 1e-12,
            seed: 1,
            ..DeConfig::default()
        };
        let result = differential_evolution(&objective, &bounds, &cfg).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
    }

    #[test]
    fn config_validation() {
        let bad_pop = DeConfig {
            pop_size: 4,
            ..DeConfig::default()
        };
        assert!(bad_pop.validate().is_err());
        let bad_cr = DeConfig {
            crossover: 1.5,
            ..DeConfig::default()
        };
        assert!(bad_cr.validate().is_err());
    }
}
