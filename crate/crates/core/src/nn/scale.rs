//! Z-score feature/target scaling.

use serde::{Deserialize, Serialize};

/// Affine standardization x -> (x - mean) / std. A constant input fits with
/// std = 1 so the transform stays invertible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for Scaler {
    /// Identity scaler.
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "cannot fit a scaler on no data");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    #[inline]
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn is_identity(&self) -> bool {
        self.mean == 0.0 && self.std == 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_standardizes() {
        let s = Scaler::fit(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        let scaled: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| s.transform(x)).collect();
        let mean: f64 = scaled.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn constant_data_falls_back_to_unit_std() {
        let s = Scaler::fit(&[7.0, 7.0, 7.0]);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.transform(7.0), 0.0);
        assert_eq!(s.inverse(0.0), 7.0);
    }

    proptest! {
        #[test]
        fn round_trip_identity(x in -1e6..1e6_f64, mean in -100.0..100.0_f64, std in 0.01..50.0_f64) {
            let s = Scaler { mean, std };
            let back = s.inverse(s.transform(x));
            prop_assert!((back - x).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
