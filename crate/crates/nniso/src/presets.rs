//! Named architectures and seeded parameter initialization.
//!
//! `mnist_mlp` / `fmnist_mlp` are the 784-200-100-10 fully connected stacks;
//! `small_cnn` is a desk-scale two-conv network (8 and 16 filters of 3x3,
//! stride 2 on the second); `toy_logreg` is the single linear unit of the 2D
//! toy task; `toy_rnn` pairs a 16-unit recurrent layer with a dense head for
//! the synthetic sequence task. Arbitrary stacks (including the full-size
//! CNN) can be described directly with [`LayerSpec`].

use crate::activation::Activation;
use crate::data::TOY_SEQ_LEN;
use crate::layer::{AvgPool2DLayer, Conv2DLayer, DenseLayer, Layer, RecurrentLayer};
use crate::network::{Network, NetworkError};
use crate::optim::{init_exponential, init_kaiming};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset '{0}' (expected one of mnist_mlp, fmnist_mlp, toy_logreg, small_cnn, toy_rnn)")]
    Unknown(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    MnistMlp,
    FmnistMlp,
    ToyLogreg,
    SmallCnn,
    ToyRnn,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::MnistMlp,
        Preset::FmnistMlp,
        Preset::ToyLogreg,
        Preset::SmallCnn,
        Preset::ToyRnn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::MnistMlp => "mnist_mlp",
            Preset::FmnistMlp => "fmnist_mlp",
            Preset::ToyLogreg => "toy_logreg",
            Preset::SmallCnn => "small_cnn",
            Preset::ToyRnn => "toy_rnn",
        }
    }
}

impl FromStr for Preset {
    type Err = PresetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PresetError::Unknown(s.to_string()))
    }
}

/// Architecture description, used by the presets and available for custom
/// stacks.
#[derive(Debug, Clone, Copy)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    AvgPool2D { size: usize },
    Flatten,
    Recurrent { inputs: usize, units: usize },
}

/// How parameter tensors are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// `U(-k, k)` with `k = sqrt(1/fan_in)` for weights and biases.
    Kaiming,
    /// Strictly positive exponential entries with rate `lambda` for weights
    /// and biases; the non-negative-from-scratch baseline.
    Exponential { lambda: f64 },
}

fn draw(scheme: InitScheme, shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor {
    match scheme {
        InitScheme::Kaiming => init_kaiming(shape, fan_in, rng),
        InitScheme::Exponential { lambda } => init_exponential(shape, lambda, rng),
    }
}

/// Builds a network from layer specs, drawing parameters layer by layer from
/// a single seeded stream (weights before biases; recurrent layers draw
/// input weights, recurrent weights, then bias).
pub fn build_network(
    input_shape: Vec<usize>,
    specs: &[LayerSpec],
    activation: Activation,
    scheme: InitScheme,
    seed: u64,
) -> Result<Network, NetworkError> {
    let mut rng = SeededRng::new(seed);
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        layers.push(match *spec {
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(DenseLayer {
                weights: draw(scheme, &[outputs, inputs], inputs, &mut rng),
                bias: draw(scheme, &[outputs], inputs, &mut rng),
                activation,
            }),
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let fan_in = in_channels * kernel * kernel;
                Layer::Conv2D(Conv2DLayer {
                    weights: draw(
                        scheme,
                        &[out_channels, in_channels, kernel, kernel],
                        fan_in,
                        &mut rng,
                    ),
                    bias: draw(scheme, &[out_channels], fan_in, &mut rng),
                    stride,
                    activation,
                })
            }
            LayerSpec::AvgPool2D { size } => Layer::AvgPool2D(AvgPool2DLayer { size }),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Recurrent { inputs, units } => Layer::Recurrent(RecurrentLayer {
                w_in: draw(scheme, &[units, inputs], inputs, &mut rng),
                w_rec: draw(scheme, &[units, units], units, &mut rng),
                bias: draw(scheme, &[units], units, &mut rng),
                activation,
                h0: Tensor::zeros(&[units]),
            }),
        });
    }
    Network::new(input_shape, layers)
}

pub fn preset_specs(preset: Preset) -> (Vec<usize>, Vec<LayerSpec>) {
    match preset {
        Preset::MnistMlp | Preset::FmnistMlp => (
            vec![784],
            vec![
                LayerSpec::Dense {
                    inputs: 784,
                    outputs: 200,
                },
                LayerSpec::Dense {
                    inputs: 200,
                    outputs: 100,
                },
                LayerSpec::Dense {
                    inputs: 100,
                    outputs: 10,
                },
            ],
        ),
        Preset::ToyLogreg => (
            vec![2],
            vec![LayerSpec::Dense {
                inputs: 2,
                outputs: 1,
            }],
        ),
        Preset::SmallCnn => (
            vec![1, 28, 28],
            vec![
                LayerSpec::Conv2D {
                    in_channels: 1,
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                },
                LayerSpec::Conv2D {
                    in_channels: 8,
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 16 * 12 * 12,
                    outputs: 64,
                },
                LayerSpec::Dense {
                    inputs: 64,
                    outputs: 10,
                },
            ],
        ),
        Preset::ToyRnn => (
            vec![TOY_SEQ_LEN, 1],
            vec![
                LayerSpec::Recurrent {
                    inputs: 1,
                    units: 16,
                },
                LayerSpec::Dense {
                    inputs: 16,
                    outputs: 2,
                },
            ],
        ),
    }
}

pub fn build_preset(
    preset: Preset,
    activation: Activation,
    seed: u64,
) -> Result<Network, PresetError> {
    build_preset_with_init(preset, activation, InitScheme::Kaiming, seed)
}

pub fn build_preset_with_init(
    preset: Preset,
    activation: Activation,
    scheme: InitScheme,
    seed: u64,
) -> Result<Network, PresetError> {
    let (input_shape, specs) = preset_specs(preset);
    Ok(build_network(input_shape, &specs, activation, scheme, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_mlp_widths_and_param_count() {
        let net = build_preset(Preset::MnistMlp, Activation::photonic_sigmoid(), 1).unwrap();
        let shapes = net.layer_shapes().unwrap();
        assert_eq!(shapes, vec![vec![200], vec![100], vec![10]]);
        // 784*200+200 + 200*100+100 + 100*10+10
        assert_eq!(net.param_count(), 178_110);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_preset(Preset::SmallCnn, Activation::photonic_sinusoidal(), 7).unwrap();
        let b = build_preset(Preset::SmallCnn, Activation::photonic_sinusoidal(), 7).unwrap();
        let mut av = Vec::new();
        let mut bv = Vec::new();
        a.visit_params(|t| av.extend_from_slice(t.data()));
        b.visit_params(|t| bv.extend_from_slice(t.data()));
        assert_eq!(av.len(), bv.len());
        for (x, y) in av.iter().zip(&bv) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn unknown_preset_name() {
        assert!(matches!(
            "big_transformer".parse::<Preset>(),
            Err(PresetError::Unknown(_))
        ));
        assert_eq!("toy_rnn".parse::<Preset>().unwrap(), Preset::ToyRnn);
    }

    #[test]
    fn exponential_init_is_strictly_positive() {
        let net = build_preset_with_init(
            Preset::ToyRnn,
            Activation::photonic_sigmoid(),
            InitScheme::Exponential { lambda: 100.0 },
            3,
        )
        .unwrap();
        assert!(net.min_param() > 0.0);
    }

    #[test]
    fn small_cnn_shape_chain() {
        let net = build_preset(Preset::SmallCnn, Activation::photonic_sigmoid(), 2).unwrap();
        let shapes = net.layer_shapes().unwrap();
        assert_eq!(shapes[0], vec![8, 26, 26]);
        assert_eq!(shapes[1], vec![16, 12, 12]);
        assert_eq!(shapes[2], vec![2304]);
        assert_eq!(shapes.last().unwrap(), &vec![10]);
    }
}
