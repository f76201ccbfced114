//! Layers, activations, and the forward pass.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::rng::CounterRng;

/// Element-wise nonlinearity applied to a layer's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative at the pre-activation value x. relu'(0) is defined as 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// One affine map with the activation applied to its input:
/// output = activation_in(input) * weights + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// n_in x n_out, row-major to match the right-multiplication z * W.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation_in: Activation,
}

impl DenseLayer {
    pub fn n_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Kaiming-initialized layer: weights i.i.d. normal(0, 2/n_in), bias zero.
pub fn kaiming_init(
    n_in: usize,
    n_out: usize,
    activation_in: Activation,
    rng: &mut CounterRng,
) -> Result<DenseLayer, NetError> {
    if n_in == 0 {
        return Err(NetError::ZeroFanIn);
    }
    let std = (2.0 / n_in as f64).sqrt();
    let weights = Array2::from_shape_fn((n_in, n_out), |_| std * rng.next_normal());
    Ok(DenseLayer {
        weights,
        bias: Array1::zeros(n_out),
        activation_in,
    })
}

/// A stack of dense layers with consistent chained shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::ShapeMismatch("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].n_out(),
                    i + 1,
                    pair[1].n_in()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.n_out() {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {i} bias length {} != n_out {}",
                    layer.bias.len(),
                    layer.n_out()
                )));
            }
            if layer.weights.iter().any(|w| !w.is_finite())
                || layer.bias.iter().any(|b| !b.is_finite())
            {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {i} contains non-finite entries"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Kaiming-initialized network. `dims` lists layer widths including the
    /// input (e.g. [7, 32, 32, 1]); `activations` gives each layer's input
    /// activation (len = dims.len() - 1). Each layer draws from its own
    /// substream of `seed`.
    pub fn kaiming(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self, NetError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NetError::ShapeMismatch(format!(
                "{} dims with {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &act) in activations.iter().enumerate() {
            let mut rng = CounterRng::substream(seed, l as u64);
            layers.push(kaiming_init(dims[l], dims[l + 1], act, &mut rng)?);
        }
        Network::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").n_out()
    }

    /// Convenience forward for a single scalar-input, scalar-output net.
    pub fn predict_scalar(&self, x: f64) -> f64 {
        let batch = Array2::from_shape_vec((1, 1), vec![x]).expect("1x1");
        let (out, _) = forward(self, &batch).expect("scalar net shapes are valid");
        out[[0, 0]]
    }

    /// Batched predictions for a scalar-output net.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array1<f64>, NetError> {
        let (out, _) = forward(self, batch)?;
        Ok(out.index_axis(Axis(1), 0).to_owned())
    }
}

/// Every post-affine value z^(l) kept for backpropagation; zs[0] is the
/// input batch itself.
#[derive(Debug, Clone)]
pub struct Cache {
    pub(crate) zs: Vec<Array2<f64>>,
}

impl Cache {
    /// The stored z^(l) values; index 0 is the input batch.
    pub fn activations(&self) -> &[Array2<f64>] {
        &self.zs
    }
}

/// Run the forward recursion on a batch (rows are samples).
pub fn forward(net: &Network, batch: &Array2<f64>) -> Result<(Array2<f64>, Cache), NetError> {
    if batch.ncols() != net.input_dim() {
        return Err(NetError::ShapeMismatch(format!(
            "batch has {} columns, network expects {}",
            batch.ncols(),
            net.input_dim()
        )));
    }
    let mut zs = Vec::with_capacity(net.layers.len() + 1);
    zs.push(batch.clone());
    for layer in &net.layers {
        let prev = zs.last().expect("non-empty");
        let activated = prev.mapv(|x| layer.activation_in.apply(x));
        let z = activated.dot(&layer.weights) + &layer.bias;
        zs.push(z);
    }
    let output = zs.last().expect("non-empty").clone();
    Ok((output, Cache { zs }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let layers = vec![
            DenseLayer {
                weights: Array2::zeros((2, 3)),
                bias: Array1::zeros(3),
                activation_in: Activation::Identity,
            },
            DenseLayer {
                weights: Array2::zeros((3, 1)),
                bias: Array1::zeros(1),
                activation_in: Activation::Tanh,
            },
        ];
        let net = Network::new(layers).unwrap();
        let batch = array![[1.0, -2.0], [3.5, 0.1]];
        let (out, _) = forward(&net, &batch).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_affine_layer_arithmetic() {
        // W = [[2]], b = [3], x = [1] -> 5
        let net = Network::new(vec![DenseLayer {
            weights: array![[2.0]],
            bias: array![3.0],
            activation_in: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.predict_scalar(1.0), 5.0);
    }

    #[test]
    fn identity_network_collapses_to_single_affine_map() {
        // With identity activations the stack equals one affine map
        // W = W1 W2, b = b1 W2 + b2.
        let net = Network::kaiming(
            &[3, 4, 2],
            &[Activation::Identity, Activation::Identity],
            42,
        )
        .unwrap();
        let w1 = &net.layers()[0].weights;
        let b1 = &net.layers()[0].bias;
        let w2 = &net.layers()[1].weights;
        let b2 = &net.layers()[1].bias;
        let w = w1.dot(w2);
        let b = b1.dot(w2) + b2;

        let batch = array![[0.3, -1.2, 2.0], [1.0, 0.0, -0.5]];
        let (out, _) = forward(&net, &batch).unwrap();
        let collapsed = batch.dot(&w) + &b;
        for (a, e) in out.iter().zip(collapsed.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn pan_shaped_forward_matches_by_hand_recomputation() {
        // 1 -> 8 (tanh into second layer) -> 8 (relu into third) -> 1,
        // recomputed with plain loops independent of ndarray.
        let net = Network::kaiming(
            &[1, 8, 8, 1],
            &[Activation::Identity, Activation::Tanh, Activation::Relu],
            7,
        )
        .unwrap();
        let x = 0.7;
        let got = net.predict_scalar(x);

        let l = net.layers();
        let mut z1 = vec![0.0; 8];
        for j in 0..8 {
            z1[j] = x * l[0].weights[[0, j]] + l[0].bias[j];
        }
        let mut z2 = vec![0.0; 8];
        for j in 0..8 {
            let mut acc = l[1].bias[j];
            for i in 0..8 {
                acc += z1[i].tanh() * l[1].weights[[i, j]];
            }
            z2[j] = acc;
        }
        let mut y = l[2].bias[0];
        for i in 0..8 {
            y += z2[i].max(0.0) * l[2].weights[[i, 0]];
        }
        assert!((got - y).abs() < 1e-12, "got {got}, by hand {y}");
    }

    #[test]
    fn kaiming_statistics() {
        // n_in = 8 -> std sqrt(2/8) = 0.5
        let mut rng = CounterRng::new(11);
        let layer = kaiming_init(8, 2000, Activation::Identity, &mut rng).unwrap();
        let values: Vec<f64> = layer.weights.iter().copied().collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 0.5).abs() < 0.01, "std {}", var.sqrt());
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn kaiming_variance_at_fan_in_two() {
        // n_in = 2 -> variance 2/2 = 1; 1e5 samples within 3%.
        let mut rng = CounterRng::new(3);
        let layer = kaiming_init(2, 50_000, Activation::Identity, &mut rng).unwrap();
        let values: Vec<f64> = layer.weights.iter().copied().collect();
        assert_eq!(values.len(), 100_000);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn zero_fan_in_rejected() {
        let mut rng = CounterRng::new(0);
        assert!(matches!(
            kaiming_init(0, 4, Activation::Identity, &mut rng),
            Err(NetError::ZeroFanIn)
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let batch = array![[1.0, 2.0]];
        let net = Network::kaiming(&[3, 2], &[Activation::Identity], 0).unwrap();
        assert!(matches!(
            forward(&net, &batch),
            Err(NetError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-9), 1.0);
        assert_eq!(Activation::Relu.derivative(-1e-9), 0.0);
    }
}
