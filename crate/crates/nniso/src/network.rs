//! The network container: an ordered stack of layers ending in a dense
//! classification head. Softmax lives in the loss, so `forward` returns the
//! head's post-activation values as logits.

use crate::layer::{Layer, LayerCache, LayerError, LayerGrads};
use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer {index} ({kind}): {source}")]
    Layer {
        index: usize,
        kind: &'static str,
        source: LayerError,
    },
    #[error("network input {got:?} does not match declared shape {expected:?}")]
    Input { expected: Vec<usize>, got: Vec<usize> },
    #[error("network must end in a dense classification head")]
    MissingHead,
    #[error("network has no layers")]
    NoLayers,
    #[error("cache does not match this network")]
    StaleCache,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct Network {
    /// Per-sample input shape (no batch dimension).
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

#[derive(Debug)]
pub struct ForwardCache {
    pub per_layer: Vec<LayerCache>,
}

#[derive(Debug)]
pub struct Gradients {
    pub per_layer: Vec<LayerGrads>,
}

impl Network {
    /// Builds a network, checking the whole shape chain and that the final
    /// layer is the dense classification head.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::NoLayers);
        }
        if !matches!(layers.last(), Some(Layer::Dense(_))) {
            return Err(NetworkError::MissingHead);
        }
        let net = Network {
            input_shape,
            layers,
        };
        net.layer_shapes()?;
        Ok(net)
    }

    /// Sample shape after each layer; validates the chain.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>, NetworkError> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            cur = layer.output_shape(&cur).map_err(|source| NetworkError::Layer {
                index,
                kind: layer.kind_name(),
                source,
            })?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(l)) => l.out_dim(),
            _ => 0,
        }
    }

    pub fn head_activation(&self) -> &crate::activation::Activation {
        self.layers
            .last()
            .and_then(|l| l.activation())
            .expect("validated head")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_batch_input(&self, x: &Tensor) -> Result<(), NetworkError> {
        if x.rank() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(NetworkError::Input {
                expected: self.input_shape.clone(),
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the batch through every layer; returns logits (the head's
    /// post-activation output) and the cache for `backward`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), NetworkError> {
        self.check_batch_input(x)?;
        let mut cur = x.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(&cur).map_err(|source| NetworkError::Layer {
                index,
                kind: layer.kind_name(),
                source,
            })?;
            per_layer.push(cache);
            cur = y;
        }
        Ok((cur, ForwardCache { per_layer }))
    }

    /// Backpropagates `dLoss/dLogits` through the stack, producing gradients
    /// for every parameter tensor. The input gradient of layer 0 is not
    /// materialized.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Tensor,
    ) -> Result<Gradients, NetworkError> {
        if cache.per_layer.len() != self.layers.len() {
            return Err(NetworkError::StaleCache);
        }
        let mut per_layer = vec![LayerGrads::None; self.layers.len()];
        let mut dy = dlogits.clone();
        for index in (0..self.layers.len()).rev() {
            let layer = &self.layers[index];
            let (grads, dx) = layer
                .backward(&cache.per_layer[index], &dy, index > 0)
                .map_err(|source| NetworkError::Layer {
                    index,
                    kind: layer.kind_name(),
                    source,
                })?;
            per_layer[index] = grads;
            if index > 0 {
                dy = dx.ok_or(NetworkError::StaleCache)?;
            }
        }
        Ok(Gradients { per_layer })
    }

    /// Class predictions from logits: argmax for multi-class heads. A
    /// single-output head predicts class 1 when its output is at least the
    /// unshifted activation's value at zero pre-activation — the photonic
    /// counterpart of the classic logistic boundary `z >= 0`, and a rule that
    /// depends only on the output value so the transformed network agrees
    /// sample for sample.
    pub fn predictions(&self, logits: &Tensor) -> Vec<usize> {
        let k = logits.shape()[1];
        let b = logits.shape()[0];
        if k == 1 {
            let head = self.head_activation();
            let threshold = crate::activation::Activation {
                kind: head.kind,
                shift: 0.0,
            }
            .apply(0.0);
            (0..b)
                .map(|i| usize::from(logits.data()[i] >= threshold))
                .collect()
        } else {
            (0..b)
                .map(|i| {
                    let row = &logits.data()[i * k..(i + 1) * k];
                    let mut best = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = j;
                        }
                    }
                    best
                })
                .collect()
        }
    }

    /// Visits every parameter tensor in a fixed order (per layer: weights
    /// then bias; recurrent: input weights, recurrent weights, bias).
    pub fn visit_params(&self, mut f: impl FnMut(&Tensor)) {
        for layer in &self.layers {
            match layer {
                Layer::Dense(l) => {
                    f(&l.weights);
                    f(&l.bias);
                }
                Layer::Conv2D(l) => {
                    f(&l.weights);
                    f(&l.bias);
                }
                Layer::Recurrent(l) => {
                    f(&l.w_in);
                    f(&l.w_rec);
                    f(&l.bias);
                }
                _ => {}
            }
        }
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Tensor)) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => {
                    f(&mut l.weights);
                    f(&mut l.bias);
                }
                Layer::Conv2D(l) => {
                    f(&mut l.weights);
                    f(&mut l.bias);
                }
                Layer::Recurrent(l) => {
                    f(&mut l.w_in);
                    f(&mut l.w_rec);
                    f(&mut l.bias);
                }
                _ => {}
            }
        }
    }

    /// Smallest parameter value across the whole network.
    pub fn min_param(&self) -> f64 {
        let mut min = f64::INFINITY;
        self.visit_params(|t| {
            if let Ok(m) = t.min_value() {
                min = min.min(m);
            }
        });
        min
    }

    /// Population variance of the weight tensor of each parametric layer
    /// (biases excluded). The last entry is the classification layer.
    pub fn weight_variances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            let var = match layer {
                Layer::Dense(l) => l.weights.variance().ok(),
                Layer::Conv2D(l) => l.weights.variance().ok(),
                Layer::Recurrent(l) => {
                    // one trace over both weight matrices
                    let mut all = l.w_in.data().to_vec();
                    all.extend_from_slice(l.w_rec.data());
                    Tensor::from_vec(all).variance().ok()
                }
                _ => None,
            };
            if let Some(v) = var {
                out.push(v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::layer::DenseLayer;

    fn two_layer_net() -> Network {
        let l1 = DenseLayer {
            weights: Tensor::from_rows(&[vec![0.5, -0.2], vec![0.1, 0.3], vec![-0.4, 0.7]])
                .unwrap(),
            bias: Tensor::from_vec(vec![0.1, -0.1, 0.2]),
            activation: Activation::photonic_sigmoid(),
        };
        let l2 = DenseLayer {
            weights: Tensor::from_rows(&[vec![0.2, -0.5, 0.3], vec![0.6, 0.1, -0.2]]).unwrap(),
            bias: Tensor::from_vec(vec![0.0, 0.05]),
            activation: Activation::photonic_sigmoid(),
        };
        Network::new(vec![2], vec![Layer::Dense(l1), Layer::Dense(l2)]).unwrap()
    }

    #[test]
    fn forward_is_deterministic() {
        let net = two_layer_net();
        let x = Tensor::from_rows(&[vec![0.3, 0.9], vec![0.1, 0.4]]).unwrap();
        let (a, _) = net.forward(&x).unwrap();
        let (b, _) = net.forward(&x).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn zero_params_give_constant_logits() {
        let l = DenseLayer {
            weights: Tensor::zeros(&[3, 4]),
            bias: Tensor::zeros(&[3]),
            activation: Activation::photonic_sinusoidal(),
        };
        let net = Network::new(vec![4], vec![Layer::Dense(l)]).unwrap();
        let x = Tensor::from_rows(&[vec![0.2, 0.4, 0.6, 0.8]]).unwrap();
        let (logits, _) = net.forward(&x).unwrap();
        let first = logits.data()[0];
        assert!(logits.data().iter().all(|&v| v == first));
        assert_eq!(first, Activation::photonic_sinusoidal().apply(0.0));
    }

    #[test]
    fn bad_input_names_layer_index() {
        let net = two_layer_net();
        let x = Tensor::from_rows(&[vec![0.3, 0.9, 0.1]]).unwrap();
        let err = net.forward(&x).unwrap_err();
        assert!(err.to_string().contains("declared shape"), "{err}");

        // mismatched mid-chain shapes surface the offending layer
        let l1 = DenseLayer {
            weights: Tensor::zeros(&[3, 2]),
            bias: Tensor::zeros(&[3]),
            activation: Activation::photonic_sigmoid(),
        };
        let l2 = DenseLayer {
            weights: Tensor::zeros(&[2, 5]),
            bias: Tensor::zeros(&[2]),
            activation: Activation::photonic_sigmoid(),
        };
        let err = Network::new(vec![2], vec![Layer::Dense(l1), Layer::Dense(l2)]).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn head_must_be_dense() {
        let err = Network::new(vec![4], vec![Layer::Flatten]).unwrap_err();
        assert!(matches!(err, NetworkError::MissingHead));
    }

    #[test]
    fn predictions_argmax_and_threshold() {
        let net = two_layer_net();
        let logits = Tensor::from_rows(&[vec![0.2, 0.8], vec![0.9, 0.3]]).unwrap();
        assert_eq!(net.predictions(&logits), vec![1, 0]);

        let single = DenseLayer {
            weights: Tensor::zeros(&[1, 2]),
            bias: Tensor::zeros(&[1]),
            activation: Activation::photonic_sigmoid(),
        };
        let net1 = Network::new(vec![2], vec![Layer::Dense(single)]).unwrap();
        // boundary sits at g(0), i.e. zero pre-activation
        let g0 = Activation::photonic_sigmoid().apply(0.0);
        let logits = Tensor::new(vec![2, 1], vec![g0 + 0.001, g0 - 0.001]).unwrap();
        assert_eq!(net1.predictions(&logits), vec![1, 0]);
    }
}
