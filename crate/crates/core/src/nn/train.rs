//! Loss, backpropagation, parameter updates, and the training loop.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::network::{forward, Cache, Network};
use super::NetError;
use crate::rng::CounterRng;

/// Training samples: one row per sample, one scalar target per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self, NetError> {
        if inputs.nrows() == 0 {
            return Err(NetError::EmptyDataset);
        }
        if inputs.nrows() != targets.len() {
            return Err(NetError::LengthMismatch {
                expected: inputs.nrows(),
                got: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean squared error (1/m) * sum (target - pred)^2.
pub fn mse_loss(pred: &Array1<f64>, target: &Array1<f64>) -> Result<f64, NetError> {
    if pred.len() != target.len() {
        return Err(NetError::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let m = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / m)
}

/// Per-layer weight and bias gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Exact gradients of `mse_loss` with respect to every weight and bias,
/// averaged over the batch in the cache.
pub fn backward(net: &Network, cache: &Cache, target: &Array1<f64>) -> Result<Gradients, NetError> {
    let layers = net.layers();
    if cache.zs.len() != layers.len() + 1 {
        return Err(NetError::StaleCache);
    }
    for (l, layer) in layers.iter().enumerate() {
        if cache.zs[l].ncols() != layer.n_in() || cache.zs[l + 1].ncols() != layer.n_out() {
            return Err(NetError::StaleCache);
        }
    }
    let m = cache.zs[0].nrows();
    if target.len() != m {
        return Err(NetError::LengthMismatch {
            expected: m,
            got: target.len(),
        });
    }
    if net.output_dim() != 1 {
        return Err(NetError::ShapeMismatch(
            "backward expects a scalar-output network".into(),
        ));
    }

    let output = cache.zs.last().expect("non-empty");
    // dC/dZ^L for C = (1/m) ||Y - Z^L||^2
    let mut delta: Array2<f64> = Array2::from_shape_fn((m, 1), |(i, _)| {
        2.0 / m as f64 * (output[[i, 0]] - target[i])
    });

    let mut dw: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    let mut db: Vec<Array1<f64>> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate().rev() {
        let z_prev = &cache.zs[l];
        let activated = z_prev.mapv(|x| layer.activation_in.apply(x));
        dw.push(activated.t().dot(&delta));
        db.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let back = delta.dot(&layer.weights.t());
            let deriv = z_prev.mapv(|x| layer.activation_in.derivative(x));
            delta = back * deriv;
        }
    }
    dw.reverse();
    db.reverse();
    Ok(Gradients {
        weights: dw,
        biases: db,
    })
}

/// Elementwise descent step: w <- w - lr * dC/dw.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) {
    for (layer, (dw, db)) in net
        .layers_mut()
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
    {
        layer.weights.zip_mut_with(dw, |w, g| *w -= lr * g);
        layer.bias.zip_mut_with(db, |b, g| *b -= lr * g);
    }
}

/// Adam moment accumulators, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m1_weights: Vec<Array2<f64>>,
    m2_weights: Vec<Array2<f64>>,
    m1_biases: Vec<Array1<f64>>,
    m2_biases: Vec<Array1<f64>>,
    /// Step counter; incremented before bias correction, so the first step
    /// uses t = 1.
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let m1_weights = net
            .layers()
            .iter()
            .map(|l| Array2::zeros(l.weights.raw_dim()))
            .collect::<Vec<_>>();
        let m1_biases = net
            .layers()
            .iter()
            .map(|l| Array1::zeros(l.bias.raw_dim()))
            .collect::<Vec<_>>();
        Self {
            m2_weights: m1_weights.clone(),
            m2_biases: m1_biases.clone(),
            m1_weights,
            m1_biases,
            t: 0,
        }
    }

    /// Second-moment accumulators are sums of squares, hence never negative.
    pub fn second_moments_non_negative(&self) -> bool {
        self.m2_weights.iter().all(|m| m.iter().all(|&v| v >= 0.0))
            && self.m2_biases.iter().all(|m| m.iter().all(|&v| v >= 0.0))
    }
}

/// One Adam update:
///   m1 <- b1 m1 + (1-b1) g,  m2 <- b2 m2 + (1-b2) g^2,
///   mhat = m / (1 - b^t),    x <- x - lr * mhat1 / (sqrt(mhat2) + eps).
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.epsilon);
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let (m1, m2, g) = (&mut state.m1_weights[l], &mut state.m2_weights[l], &grads.weights[l]);
        ndarray::Zip::from(&mut layer.weights)
            .and(m1)
            .and(m2)
            .and(g)
            .for_each(|w, m1, m2, &g| {
                *m1 = b1 * *m1 + (1.0 - b1) * g;
                *m2 = b2 * *m2 + (1.0 - b2) * g * g;
                *w -= lr * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
            });
        let (m1, m2, g) = (&mut state.m1_biases[l], &mut state.m2_biases[l], &grads.biases[l]);
        ndarray::Zip::from(&mut layer.bias)
            .and(m1)
            .and(m2)
            .and(g)
            .for_each(|w, m1, m2, &g| {
                *m1 = b1 * *m1 + (1.0 - b1) * g;
                *m2 = b2 * *m2 + (1.0 - b2) * g * g;
                *w -= lr * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
            });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: usize::MAX, // full batch
            epochs: 1000,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.lr > 0.0) {
            return Err(NetError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NetError::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NetError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train a network on a dataset. Shuffles per epoch from the seed when
/// enabled, slices into batches (the last may be short), performs one
/// forward/backward/step per batch, and records the full-dataset loss after
/// each epoch.
pub fn train(
    mut net: Network,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>), NetError> {
    cfg.validate()?;
    let m = data.len();
    let batch_size = cfg.batch_size.min(m);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..m).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            let mut rng = CounterRng::substream(cfg.seed, epoch as u64);
            rng.shuffle(&mut order);
        }
        for chunk in order.chunks(batch_size) {
            let inputs = data.inputs.select(Axis(0), chunk);
            let targets = data.targets.select(Axis(0), chunk);
            let (_, cache) = forward(&net, &inputs)?;
            let grads = backward(&net, &cache, &targets)?;
            match cfg.optimizer {
                Optimizer::Sgd => sgd_step(&mut net, &grads, cfg.lr),
                Optimizer::Adam => adam_step(&mut net, &grads, &mut adam, cfg),
            }
        }
        let predictions = net.predict(&data.inputs)?;
        history.push(mse_loss(&predictions, &data.targets)?);
    }
    Ok((net, history))
}
