//! Shared test utilities: random network generation spanning all layer
//! kinds, and brute-force oracles that are independent of the library's
//! forward/backward implementations.

use nniso::activation::Activation;
use nniso::layer::{Conv2DLayer, DenseLayer, Layer};
use nniso::network::Network;
use nniso::presets::{build_network, InitScheme, LayerSpec};
use nniso::rng::SeededRng;
use nniso::tensor::Tensor;

pub enum NetKind {
    Dense,
    Conv,
    Recurrent,
}

/// Random architecture of the requested kind: dense stacks of depth 1-3 and
/// width <= 64, conv stacks with <= 2 conv layers of <= 8 filters (sometimes
/// pooled), or a recurrent layer of <= 16 units over <= 5 steps.
pub fn random_net(kind: &NetKind, activation: Activation, rng: &mut SeededRng) -> Network {
    let (input_shape, specs) = match kind {
        NetKind::Dense => {
            let depth = 1 + rng.next_below(3);
            let mut dims = vec![2 + rng.next_below(11)];
            for _ in 0..depth {
                dims.push(2 + rng.next_below(63));
            }
            let specs: Vec<LayerSpec> = dims
                .windows(2)
                .map(|w| LayerSpec::Dense {
                    inputs: w[0],
                    outputs: w[1],
                })
                .collect();
            (vec![dims[0]], specs)
        }
        NetKind::Conv => {
            let c = 1 + rng.next_below(3);
            let hw = 6 + rng.next_below(5);
            let f1 = 1 + rng.next_below(8);
            let s1 = 1 + rng.next_below(2);
            let mut specs = vec![LayerSpec::Conv2D {
                in_channels: c,
                out_channels: f1,
                kernel: 3,
                stride: s1,
            }];
            let mut spatial = (hw - 3) / s1 + 1;
            let mut channels = f1;
            if spatial >= 4 && rng.next_below(2) == 0 {
                specs.push(LayerSpec::AvgPool2D { size: 2 });
                spatial /= 2;
            }
            if spatial >= 2 && rng.next_below(2) == 0 {
                let f2 = 1 + rng.next_below(8);
                specs.push(LayerSpec::Conv2D {
                    in_channels: channels,
                    out_channels: f2,
                    kernel: 2,
                    stride: 1,
                });
                channels = f2;
                spatial -= 1;
            }
            specs.push(LayerSpec::Flatten);
            let classes = 2 + rng.next_below(5);
            specs.push(LayerSpec::Dense {
                inputs: channels * spatial * spatial,
                outputs: classes,
            });
            (vec![c, hw, hw], specs)
        }
        NetKind::Recurrent => {
            let t = 2 + rng.next_below(4);
            let m = 1 + rng.next_below(4);
            let units = 2 + rng.next_below(15);
            let classes = 2 + rng.next_below(5);
            (
                vec![t, m],
                vec![
                    LayerSpec::Recurrent { inputs: m, units },
                    LayerSpec::Dense {
                        inputs: units,
                        outputs: classes,
                    },
                ],
            )
        }
    };
    let seed = rng.next_u64();
    let mut net = build_network(input_shape, &specs, activation, InitScheme::Kaiming, seed)
        .expect("generated architectures are valid");
    // occasionally blow the weights up so the bias folding and the shifting
    // point get exercised far from the origin
    if rng.next_below(3) == 0 {
        let scale = 1.0 + 4.0 * rng.uniform();
        net.visit_params_mut(|t| {
            for v in t.data_mut() {
                *v *= scale;
            }
        });
    }
    net
}

/// Uniform batch in `[0, bound]` shaped for the network.
pub fn random_batch(net: &Network, batch: usize, bound: f64, rng: &mut SeededRng) -> Tensor {
    let mut shape = vec![batch];
    shape.extend_from_slice(&net.input_shape);
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.uniform_range(0.0, bound)).collect(),
    )
    .expect("batch shape")
}

/// Brute-force convolution oracle: flattens each input patch to a vector and
/// applies the linear-neuron form (in-order dot product plus channel bias).
pub fn oracle_conv_forward(layer: &Conv2DLayer, x: &Tensor) -> Tensor {
    let (kh, kw) = layer.kernel();
    let (b, c, h, w) = (
        x.shape()[0],
        x.shape()[1],
        x.shape()[2],
        x.shape()[3],
    );
    let (d, s) = (layer.out_channels(), layer.stride);
    let (ho, wo) = ((h - kh) / s + 1, (w - kw) / s + 1);
    let mut z = Tensor::zeros(&[b, d, ho, wo]);
    for bi in 0..b {
        for di in 0..d {
            let kernel: Vec<f64> = layer.weights.data()
                [di * c * kh * kw..(di + 1) * c * kh * kw]
                .to_vec();
            for i in 0..ho {
                for j in 0..wo {
                    let mut patch = Vec::with_capacity(c * kh * kw);
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                patch.push(
                                    x.data()
                                        [((bi * c + ci) * h + (i * s + ki)) * w + (j * s + kj)],
                                );
                            }
                        }
                    }
                    let mut acc = 0.0;
                    for (wv, xv) in kernel.iter().zip(&patch) {
                        acc += wv * xv;
                    }
                    z.data_mut()[((bi * d + di) * ho + i) * wo + j] =
                        acc + layer.bias.data()[di];
                }
            }
        }
    }
    z
}

/// The patch-wise dense equivalent of a convolution on a fixed input size:
/// one dense row per output position, kernel weights scattered at the patch
/// offsets, channel bias replicated.
pub fn conv_as_dense(layer: &Conv2DLayer, in_shape: &[usize]) -> (DenseLayer, usize, usize) {
    let (kh, kw) = layer.kernel();
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (d, s) = (layer.out_channels(), layer.stride);
    let (ho, wo) = ((h - kh) / s + 1, (w - kw) / s + 1);
    let rows = d * ho * wo;
    let cols = c * h * w;
    let mut weights = Tensor::zeros(&[rows, cols]);
    let mut bias = Tensor::zeros(&[rows]);
    for di in 0..d {
        for i in 0..ho {
            for j in 0..wo {
                let row = (di * ho + i) * wo + j;
                bias.data_mut()[row] = layer.bias.data()[di];
                for ci in 0..c {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let col = (ci * h + (i * s + ki)) * w + (j * s + kj);
                            weights.data_mut()[row * cols + col] =
                                layer.weights.data()[((di * c + ci) * kh + ki) * kw + kj];
                        }
                    }
                }
            }
        }
    }
    (
        DenseLayer {
            weights,
            bias,
            activation: layer.activation,
        },
        ho,
        wo,
    )
}

/// Single-layer network around [`conv_as_dense`] so the transform and the
/// rotated forward can run on the patch-dense form.
pub fn conv_as_dense_network(layer: &Conv2DLayer, in_shape: &[usize]) -> Network {
    let (dense, _, _) = conv_as_dense(layer, in_shape);
    Network::new(vec![in_shape.iter().product()], vec![Layer::Dense(dense)])
        .expect("patch-dense layer is a valid head")
}
