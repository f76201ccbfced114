//! Nelder-Mead downhill simplex on a bounded box.
//!
//! The simplex of DIM+1 vertices is transformed by reflection, expansion,
//! contraction, and shrink steps; trial points falling outside the bounds
//! are clamped onto the box. The best vertex value is non-increasing by
//! construction (a transform is only accepted when it improves on the
//! vertex it replaces, and shrink keeps the best vertex fixed).

use serde::{Deserialize, Serialize};

use super::{CalibrationResult, OptimError, ParamBounds, DIM};
use crate::heston::HestonParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iters: usize,
    /// Terminate when the largest vertex-to-best distance drops below this.
    pub x_tol: f64,
    /// Terminate when the worst-to-best objective spread drops below this.
    pub f_tol: f64,
}

impl Default for NmConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iters: 1000,
            x_tol: 1e-12,
            f_tol: 1e-15,
        }
    }
}

impl NmConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.expansion > self.reflection && self.reflection > self.contraction && self.contraction > 0.0)
        {
            return Err(OptimError::InvalidConfig(format!(
                "need expansion > reflection > contraction > 0, got {} / {} / {}",
                self.expansion, self.reflection, self.contraction
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OptimError::InvalidConfig(format!(
                "shrink must be in (0, 1), got {}",
                self.shrink
            )));
        }
        Ok(())
    }
}

/// Minimize `objective` from `start` inside `bounds`.
pub fn nelder_mead<F>(
    objective: &F,
    start: &[f64; DIM],
    cfg: &NmConfig,
    bounds: &ParamBounds,
) -> Result<CalibrationResult, OptimError>
where
    F: Fn(&[f64; DIM]) -> f64,
{
    cfg.validate()?;
    if let Some(i) = (0..DIM).find(|&i| start[i] < bounds.lower[i] || start[i] > bounds.upper[i]) {
        return Err(OptimError::StartOutOfBounds(i));
    }

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64; DIM]| {
        evaluations += 1;
        objective(x)
    };

    // Initial simplex: start plus a 5%-of-bound-width step along each axis,
    // flipped when the positive step would leave the box.
    let mut simplex: Vec<([f64; DIM], f64)> = Vec::with_capacity(DIM + 1);
    let f0 = eval(start);
    simplex.push((*start, f0));
    for i in 0..DIM {
        let mut vertex = *start;
        let step = 0.05 * bounds.width(i);
        vertex[i] = if start[i] + step <= bounds.upper[i] {
            start[i] + step
        } else {
            start[i] - step
        };
        let f = eval(&vertex);
        simplex.push((vertex, f));
    }

    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < cfg.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0];
        let worst = simplex[DIM];

        let f_spread = worst.1 - best.1;
        let x_spread = simplex
            .iter()
            .map(|(x, _)| {
                (0..DIM)
                    .map(|i| (x[i] - best.0[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0_f64, f64::max);
        if f_spread.abs() <= cfg.f_tol || x_spread <= cfg.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Centroid of all vertices except the worst.
        let mut centroid = [0.0; DIM];
        for (x, _) in simplex.iter().take(DIM) {
            for i in 0..DIM {
                centroid[i] += x[i] / DIM as f64;
            }
        }

        let point_along = |coef: f64| -> [f64; DIM] {
            let mut p = std::array::from_fn(|i| centroid[i] + coef * (centroid[i] - worst.0[i]));
            bounds.clamp(&mut p);
            p
        };

        let reflected = point_along(cfg.reflection);
        let f_reflected = eval(&reflected);

        if f_reflected < best.1 {
            // Try to go further in the same direction.
            let expanded = point_along(cfg.expansion);
            let f_expanded = eval(&expanded);
            simplex[DIM] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[DIM - 1].1 {
            simplex[DIM] = (reflected, f_reflected);
        } else {
            // Contract toward the better of worst/reflected.
            let contracted = if f_reflected < worst.1 {
                point_along(cfg.contraction)
            } else {
                point_along(-cfg.contraction)
            };
            let f_contracted = eval(&contracted);
            if f_contracted < worst.1.min(f_reflected) {
                simplex[DIM] = (contracted, f_contracted);
            } else {
                // Shrink everything toward the best vertex.
                let anchor = best.0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut p: [f64; DIM] = std::array::from_fn(|i| {
                        anchor[i] + cfg.shrink * (entry.0[i] - anchor[i])
                    });
                    bounds.clamp(&mut p);
                    let f = eval(&p);
                    *entry = (p, f);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x_best, f_best) = simplex[0];
    Ok(CalibrationResult {
        params: HestonParams::from_array(x_best),
        objective: f_best,
        evaluations,
        iterations,
        method: "nelder_mead".to_string(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide_box() -> ParamBounds {
        ParamBounds::new([-10.0; DIM], [10.0; DIM]).unwrap()
    }

    #[test]
    fn minimizes_shifted_quadratic() {
        // (x1 - 1)^2 + sum of squares of the rest; unique minimizer e1.
        let objective = |x: &[f64; DIM]| {
            (x[0] - 1.0).powi(2) + x[1..].iter().map(|v| v * v).sum::<f64>()
        };
        let result = nelder_mead(
            &objective,
            &[0.5, 0.5, 0.5, 0.5, 0.5],
            &NmConfig {
                max_iters: 2000,
                ..NmConfig::default()
            },
            &wide_box(),
        )
        .unwrap();
        let x = result.params.to_array();
        assert!((x[0] - 1.0).abs() < 1e-6, "x0={}", x[0]);
        for &v in &x[1..] {
            assert!(v.abs() < 1e-6, "v={v}");
        }
    }

    #[test]
    fn solves_embedded_rosenbrock() {
        let objective = |x: &[f64; DIM]| {
            let (a, b) = (x[0], x[1]);
            100.0 * (b - a * a).powi(2)
                + (1.0 - a).powi(2)
                + x[2..].iter().map(|v| v * v).sum::<f64>()
        };
        let result = nelder_mead(
            &objective,
            &[-1.2, 1.0, 0.0, 0.0, 0.0],
            &NmConfig {
                max_iters: 5000,
                ..NmConfig::default()
            },
            &wide_box(),
        )
        .unwrap();
        assert!(
            result.objective < 1e-8,
            "objective {} after {} iterations",
            result.objective,
            result.iterations
        );
    }

    #[test]
    fn constant_objective_converges_immediately() {
        let objective = |_: &[f64; DIM]| 7.0;
        let result = nelder_mead(
            &objective,
            &[0.0; DIM],
            &NmConfig::default(),
            &wide_box(),
        )
        .unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.objective, 7.0);
    }

    #[test]
    fn best_vertex_never_leaves_bounds() {
        let bounds = ParamBounds::new([0.0; DIM], [1.0; DIM]).unwrap();
        // Minimum far outside the box; clamping must keep iterates inside.
        let objective = |x: &[f64; DIM]| x.iter().map(|v| (v - 5.0).powi(2)).sum::<f64>();
        let result = nelder_mead(&objective, &[0.5; DIM], &NmConfig::default(), &bounds).unwrap();
        assert!(bounds.contains(&result.params.to_array()));
        // should end up pinned at the upper corner
        for v in result.params.to_array() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_start_outside_bounds() {
        let bounds = ParamBounds::new([0.0; DIM], [1.0; DIM]).unwrap();
        let objective = |_: &[f64; DIM]| 0.0;
        assert!(matches!(
            nelder_mead(&objective, &[2.0; DIM], &NmConfig::default(), &bounds),
            Err(OptimError::StartOutOfBounds(0))
        ));
    }

    #[test]
    fn coefficient_ordering_enforced() {
        let cfg = NmConfig {
            reflection: 3.0,
            ..NmConfig::default()
        };
        let objective = |_: &[f64; DIM]| 0.0;
        assert!(nelder_mead(&objective, &[0.0; DIM], &cfg, &wide_box()).is_err());
    }
}
