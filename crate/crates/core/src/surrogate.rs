//! Surrogate pricing workflow: generate a synthetic dataset over
//! (parameters, maturity, moneyness), train a network on it, and calibrate
//! through the frozen network instead of the quadrature pricer.
//!
//! Samples are priced at unit spot with zero rate; the moneyness feature is
//! *forward* log-moneyness ln(S/K) + r*T. Under the model the normalized
//! call price depends on rate and spot only through that combination, so a
//! single trained surrogate serves any spot level and rate: at calibration
//! time a quote is priced as spot * F(eta, T, ln(spot/strike) + r*T).

use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heston::{call_price, HestonParams, PricingError, QuadratureConfig};
use crate::market::{MarketState, OptionChain};
use crate::nn::{
    forward, load_model, save_model, train, Activation, Dataset, NetError, Network, SavedModel,
    Scaler, TrainConfig,
};
use crate::optim::{
    differential_evolution, CalibrationResult, CalibrationWeights, DeConfig, OptimError,
    ParamBounds, DIM,
};
use crate::rng::CounterRng;

/// Feature order fed to the network: the five Heston parameters, then
/// maturity, then forward log-moneyness.
pub const FEATURES: usize = DIM + 2;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid sampling spec: {0}")]
    InvalidSpec(String),
    #[error("{failed} of {requested} synthetic rows failed to price (> 1% tolerated)")]
    TooManyFailures { failed: usize, requested: usize },
    #[error("dataset file error: {0}")]
    BadDataset(String),
    #[error("model is missing its scaler block")]
    MissingScalers,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    UniformRandom,
    /// `n_samples` is the per-axis point count; total rows = n_samples^7.
    Grid,
}

/// Where and how to sample the synthetic pricing dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub bounds: ParamBounds,
    pub maturity_range: (f64, f64),
    pub moneyness_range: (f64, f64),
    pub n_samples: usize,
    pub scheme: SamplingScheme,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        self.bounds
            .validate_heston()
            .map_err(|e| SurrogateError::InvalidSpec(e.to_string()))?;
        let (t_lo, t_hi) = self.maturity_range;
        if !(t_lo > 0.0 && t_hi > t_lo) {
            return Err(SurrogateError::InvalidSpec(format!(
                "maturity range [{t_lo}, {t_hi}] must be positive and non-degenerate"
            )));
        }
        let (m_lo, m_hi) = self.moneyness_range;
        if !(m_hi > m_lo) {
            return Err(SurrogateError::InvalidSpec(format!(
                "moneyness range [{m_lo}, {m_hi}] is degenerate"
            )));
        }
        if self.total_rows() < 100 {
            return Err(SurrogateError::InvalidSpec(format!(
                "spec yields {} rows; at least 100 required",
                self.total_rows()
            )));
        }
        Ok(())
    }

    /// Number of rows the spec generates before any pricing failures.
    pub fn total_rows(&self) -> usize {
        match self.scheme {
            SamplingScheme::UniformRandom => self.n_samples,
            SamplingScheme::Grid => self.n_samples.pow(FEATURES as u32),
        }
    }
}

/// One labelled training row: price is the normalized call value V/S0 at
/// unit spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSample {
    pub params: HestonParams,
    pub maturity: f64,
    pub moneyness: f64,
    pub price: f64,
}

impl SurrogateSample {
    pub fn features(&self) -> [f64; FEATURES] {
        let p = self.params.to_array();
        [p[0], p[1], p[2], p[3], p[4], self.maturity, self.moneyness]
    }
}

/// Generated dataset plus the count of rows dropped for pricing failures.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub samples: Vec<SurrogateSample>,
    pub failures: usize,
}

/// Price one (eta, T, m) point at unit spot, zero rate.
fn unit_price(
    params: &HestonParams,
    maturity: f64,
    moneyness: f64,
    quad: &QuadratureConfig,
) -> Result<f64, PricingError> {
    let state = MarketState {
        spot: 1.0,
        rate: 0.0,
        as_of: String::new(),
    };
    let strike = (-moneyness).exp();
    Ok(call_price(strike, &state, params, maturity, quad)?.max(0.0))
}

/// Generate the synthetic dataset. Deterministic per seed; failed rows are
/// dropped and counted, and more than 1% of failures is an error.
pub fn gen_synthetic(
    spec: &SamplingSpec,
    quad: &QuadratureConfig,
) -> Result<SyntheticSet, SurrogateError> {
    spec.validate()?;
    quad.validate()?;
    let points: Vec<[f64; FEATURES]> = match spec.scheme {
        SamplingScheme::UniformRandom => {
            let lo = spec.bounds.lower;
            let hi = spec.bounds.upper;
            (0..spec.n_samples)
                .map(|row| {
                    let mut rng = CounterRng::substream(spec.seed, row as u64);
                    let mut x = [0.0; FEATURES];
                    for i in 0..DIM {
                        x[i] = rng.next_range(lo[i], hi[i]);
                    }
                    x[DIM] = rng.next_range(spec.maturity_range.0, spec.maturity_range.1);
                    x[DIM + 1] = rng.next_range(spec.moneyness_range.0, spec.moneyness_range.1);
                    x
                })
                .collect()
        }
        SamplingScheme::Grid => {
            let per_axis = spec.n_samples;
            let axis = |lo: f64, hi: f64, i: usize| {
                if per_axis == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
                }
            };
            let total = per_axis.pow(FEATURES as u32);
            (0..total)
                .map(|linear| {
                    // Decompose the linear index into per-axis digits,
                    // last axis (moneyness) fastest.
                    let mut digits = [0usize; FEATURES];
                    let mut rest = linear;
                    for d in (0..FEATURES).rev() {
                        digits[d] = rest % per_axis;
                        rest /= per_axis;
                    }
                    let mut x = [0.0; FEATURES];
                    for i in 0..DIM {
                        x[i] = axis(spec.bounds.lower[i], spec.bounds.upper[i], digits[i]);
                    }
                    x[DIM] = axis(spec.maturity_range.0, spec.maturity_range.1, digits[DIM]);
                    x[DIM + 1] =
                        axis(spec.moneyness_range.0, spec.moneyness_range.1, digits[DIM + 1]);
                    x
                })
                .collect()
        }
    };
    finish_generation(points, spec, quad)
}

fn finish_generation(
    points: Vec<[f64; FEATURES]>,
    spec: &SamplingSpec,
    quad: &QuadratureConfig,
) -> Result<SyntheticSet, SurrogateError> {
    let requested = points.len();
    let priced: Vec<Option<SurrogateSample>> = points
        .par_iter()
        .map(|x| {
            let params = HestonParams::from_array([x[0], x[1], x[2], x[3], x[4]]);
            unit_price(&params, x[DIM], x[DIM + 1], quad)
                .ok()
                .map(|price| SurrogateSample {
                    params,
                    maturity: x[DIM],
                    moneyness: x[DIM + 1],
                    price,
                })
        })
        .collect();
    let samples: Vec<SurrogateSample> = priced.into_iter().flatten().collect();
    let failures = requested - samples.len();
    if failures * 100 > requested {
        return Err(SurrogateError::TooManyFailures { failed: failures, requested });
    }
    Ok(SyntheticSet { samples, failures })
}

/// A trained surrogate: network plus frozen scalers and training ranges.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub net: Network,
    pub input_scalers: Vec<Scaler>,
    pub target_scaler: Scaler,
    pub maturity_range: (f64, f64),
    pub moneyness_range: (f64, f64),
}

#[derive(Debug, Serialize, Deserialize)]
struct SurrogateExtra {
    maturity_range: (f64, f64),
    moneyness_range: (f64, f64),
}

impl SurrogateModel {
    /// Normalized price prediction for a batch of raw feature rows.
    pub fn predict_normalized(&self, raw: &Array2<f64>) -> Result<Array1<f64>, NetError> {
        let mut scaled = raw.clone();
        for (j, scaler) in self.input_scalers.iter().enumerate() {
            scaled.column_mut(j).mapv_inplace(|x| scaler.transform(x));
        }
        let (out, _) = forward(&self.net, &scaled)?;
        Ok(out.column(0).mapv(|z| self.target_scaler.inverse(z)))
    }

    /// Currency prices for a chain's quotes at `params`. Columns 5 and 6 of
    /// the feature matrix must be pre-filled with maturity and forward
    /// log-moneyness; callers reuse the matrix across objective evaluations.
    fn predict_chain(
        &self,
        features: &mut Array2<f64>,
        params: &HestonParams,
        spot: f64,
    ) -> Result<Vec<f64>, NetError> {
        let p = params.to_array();
        for mut row in features.rows_mut() {
            for i in 0..DIM {
                row[i] = p[i];
            }
        }
        let normalized = self.predict_normalized(features)?;
        Ok(normalized.iter().map(|&v| spot * v).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        let extra = serde_json::to_value(SurrogateExtra {
            maturity_range: self.maturity_range,
            moneyness_range: self.moneyness_range,
        })
        .expect("ranges serialize");
        let mut doc = SavedModel::from_network(&self.net)
            .with_scalers(self.input_scalers.clone(), self.target_scaler);
        doc.extra = Some(extra);
        save_model(&doc, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let doc = load_model(path)?;
        let input_scalers = doc.input_scalers.clone().ok_or(SurrogateError::MissingScalers)?;
        let target_scaler = doc.target_scaler.ok_or(SurrogateError::MissingScalers)?;
        let extra: SurrogateExtra = doc
            .extra
            .clone()
            .ok_or_else(|| SurrogateError::BadDataset("missing training-range metadata".into()))
            .and_then(|v| {
                serde_json::from_value(v)
                    .map_err(|e| SurrogateError::BadDataset(e.to_string()))
            })?;
        Ok(Self {
            net: doc.into_network()?,
            input_scalers,
            target_scaler,
            maturity_range: extra.maturity_range,
            moneyness_range: extra.moneyness_range,
        })
    }
}

/// Network shape for the surrogate; hidden layers all use one activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for SurrogateArch {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Relu,
        }
    }
}

/// Train a surrogate on generated samples. The samples are canonically
/// sorted, split 80/20 train/validation from the seed, and z-scored on the
/// train side. Returns the model and the validation RMSE in normalized
/// price units.
pub fn train_surrogate(
    samples: &[SurrogateSample],
    arch: &SurrogateArch,
    cfg: &TrainConfig,
) -> Result<(SurrogateModel, f64), SurrogateError> {
    if samples.len() < 10 {
        return Err(SurrogateError::InvalidSpec(format!(
            "{} samples is too few to train on",
            samples.len()
        )));
    }
    // Canonical order makes the trained net invariant to input permutation.
    let mut ordered: Vec<&SurrogateSample> = samples.iter().collect();
    ordered.sort_by(|a, b| {
        a.features()
            .as_slice()
            .partial_cmp(b.features().as_slice())
            .expect("finite features")
    });

    let mut indices: Vec<usize> = (0..ordered.len()).collect();
    let mut rng = CounterRng::substream(cfg.seed, SPLIT_STREAM);
    rng.shuffle(&mut indices);
    let n_val = (ordered.len() / 5).max(1);
    let (val_idx, train_idx) = indices.split_at(n_val);

    let feature_matrix = |idx: &[usize]| {
        Array2::from_shape_fn((idx.len(), FEATURES), |(r, c)| ordered[idx[r]].features()[c])
    };
    let price_vector =
        |idx: &[usize]| Array1::from_shape_fn(idx.len(), |r| ordered[idx[r]].price);

    let train_raw = feature_matrix(train_idx);
    let train_prices = price_vector(train_idx);

    let input_scalers: Vec<Scaler> = (0..FEATURES)
        .map(|j| Scaler::fit(&train_raw.column(j).to_vec()))
        .collect();
    let target_scaler = Scaler::fit(&train_prices.to_vec());

    let mut train_scaled = train_raw;
    for (j, scaler) in input_scalers.iter().enumerate() {
        train_scaled.column_mut(j).mapv_inplace(|x| scaler.transform(x));
    }
    let train_targets = train_prices.mapv(|p| target_scaler.transform(p));

    let mut dims = vec![FEATURES];
    dims.extend_from_slice(&arch.hidden);
    dims.push(1);
    let mut activations = vec![Activation::Identity];
    activations.extend(std::iter::repeat(arch.activation).take(arch.hidden.len()));
    let net = Network::kaiming(&dims, &activations, cfg.seed)?;

    let dataset = Dataset::new(train_scaled, train_targets)?;
    let (net, _history) = train(net, &dataset, cfg)?;

    let model = SurrogateModel {
        net,
        input_scalers,
        target_scaler,
        maturity_range: (
            column_min(&ordered, |s| s.maturity),
            column_max(&ordered, |s| s.maturity),
        ),
        moneyness_range: (
            column_min(&ordered, |s| s.moneyness),
            column_max(&ordered, |s| s.moneyness),
        ),
    };

    let val_raw = feature_matrix(val_idx);
    let val_prices = price_vector(val_idx);
    let predictions = model.predict_normalized(&val_raw)?;
    let rmse = (predictions
        .iter()
        .zip(val_prices.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / val_idx.len() as f64)
        .sqrt();
    Ok((model, rmse))
}

const SPLIT_STREAM: u64 = 0x56414C;

fn column_min(samples: &[&SurrogateSample], f: impl Fn(&SurrogateSample) -> f64) -> f64 {
    samples.iter().map(|s| f(s)).fold(f64::INFINITY, f64::min)
}

fn column_max(samples: &[&SurrogateSample], f: impl Fn(&SurrogateSample) -> f64) -> f64 {
    samples.iter().map(|s| f(s)).fold(f64::NEG_INFINITY, f64::max)
}

/// A quote outside the surrogate's training ranges; it is still priced, but
/// the prediction is an extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationWarning {
    pub quote_index: usize,
    pub maturity: f64,
    pub moneyness: f64,
    pub maturity_in_range: bool,
    pub moneyness_in_range: bool,
}

/// Forward log-moneyness features for a chain (maturity, ln(S/K) + r*T).
fn chain_features(chain: &OptionChain) -> Array2<f64> {
    let spot = chain.state.spot;
    let rate = chain.state.rate;
    Array2::from_shape_fn((chain.len(), FEATURES), |(r, c)| {
        let q = &chain.quotes()[r];
        match c {
            c if c == DIM => q.maturity,
            c if c == DIM + 1 => (spot / q.strike).ln() + rate * q.maturity,
            _ => 0.0,
        }
    })
}

/// Range check for every quote against the model's training box.
pub fn extrapolation_warnings(
    chain: &OptionChain,
    model: &SurrogateModel,
) -> Vec<ExtrapolationWarning> {
    let features = chain_features(chain);
    let mut warnings = Vec::new();
    for (i, row) in features.rows().into_iter().enumerate() {
        let (t, m) = (row[DIM], row[DIM + 1]);
        let t_ok = t >= model.maturity_range.0 && t <= model.maturity_range.1;
        let m_ok = m >= model.moneyness_range.0 && m <= model.moneyness_range.1;
        if !t_ok || !m_ok {
            warnings.push(ExtrapolationWarning {
                quote_index: i,
                maturity: t,
                moneyness: m,
                maturity_in_range: t_ok,
                moneyness_in_range: m_ok,
            });
        }
    }
    warnings
}

/// Weighted-RMSE objective evaluated through the surrogate with one batched
/// forward pass per call. Also used by the speed-ratio benchmark.
pub fn surrogate_objective<'a>(
    chain: &'a OptionChain,
    model: &'a SurrogateModel,
    weights: &CalibrationWeights,
) -> Result<impl Fn(&HestonParams) -> f64 + Sync + 'a, SurrogateError> {
    let weights = weights.resolve(chain.quotes())?;
    let template = chain_features(chain);
    let spot = chain.state.spot;
    Ok(move |params: &HestonParams| -> f64 {
        let mut features = template.clone();
        match model.predict_chain(&mut features, params, spot) {
            Ok(prices) => {
                let mut acc = 0.0;
                for ((quote, price), &w) in chain.quotes().iter().zip(&prices).zip(&weights) {
                    let diff = price - quote.last_price;
                    acc += w * diff * diff;
                }
                acc.sqrt()
            }
            Err(_) => f64::INFINITY,
        }
    })
}

/// Calibrate through the frozen surrogate with differential evolution.
pub fn surrogate_calibrate(
    chain: &OptionChain,
    model: &SurrogateModel,
    bounds: &ParamBounds,
    weights: &CalibrationWeights,
    de_cfg: &DeConfig,
) -> Result<(CalibrationResult, Vec<ExtrapolationWarning>), SurrogateError> {
    bounds.validate_heston()?;
    let warnings = extrapolation_warnings(chain, model);
    let objective = surrogate_objective(chain, model, weights)?;
    let vector_objective = |x: &[f64; DIM]| objective(&HestonParams::from_array(*x));
    let mut result = differential_evolution(&vector_objective, bounds, de_cfg)?;
    result.method = "surrogate_de".to_string();
    Ok((result, warnings))
}

/// Persist a dataset as CSV (kappa,theta,sigma,rho,v0,maturity,moneyness,price).
pub fn save_dataset(samples: &[SurrogateSample], path: &Path) -> Result<(), SurrogateError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer
        .write_record([
            "kappa", "theta", "sigma", "rho", "v0", "maturity", "moneyness", "price",
        ])
        .map_err(csv_err)?;
    for s in samples {
        let f = s.features();
        let mut record: Vec<String> = f.iter().map(|v| json_num(*v)).collect();
        record.push(json_num(s.price));
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<SurrogateSample>, SurrogateError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != FEATURES + 1 {
            return Err(SurrogateError::BadDataset(format!(
                "row {}: expected {} columns, got {}",
                i + 1,
                FEATURES + 1,
                record.len()
            )));
        }
        let mut values = [0.0; FEATURES + 1];
        for (j, field) in record.iter().enumerate() {
            values[j] = field.trim().parse().map_err(|_| {
                SurrogateError::BadDataset(format!("row {}: bad number '{}'", i + 1, field))
            })?;
        }
        samples.push(SurrogateSample {
            params: HestonParams::from_array([values[0], values[1], values[2], values[3], values[4]]),
            maturity: values[5],
            moneyness: values[6],
            price: values[7],
        });
    }
    if samples.is_empty() {
        return Err(SurrogateError::BadDataset("dataset is empty".into()));
    }
    Ok(samples)
}

fn csv_err(e: csv::Error) -> SurrogateError {
    SurrogateError::BadDataset(e.to_string())
}

fn json_num(x: f64) -> String {
    serde_json::to_string(&x).expect("finite f64")
}
