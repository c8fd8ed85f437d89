//! The non-negative network transform and its execution path.
//!
//! `nnt_transform` rewrites every parametric layer of a network into its
//! non-negative equivalent: weights become absolute values, the sign pattern
//! moves into a rotation mask, the bias absorbs the worst-case contribution
//! of the rotated inputs, and the activation is slid right by the layer's
//! activation shifting point `c`. Per layer, with incoming input bound
//! `alpha`:
//!
//! ```text
//! b~_i  = b_i - alpha * sum_{w_ij < 0} |w_ij|
//! m     = sign(W)            (zero weights count as +1)
//! c     = max_i |b~_i|
//! W'    = |W|,  b'_i = b~_i + c,  g_c(z) = g(z - c)
//! ```
//!
//! The next layer's bound is the activation's `g_max`. `nnf_forward` then
//! executes the transformed stack, rotating each input feature that was
//! originally paired with a negative weight: `r = m*y + ((1 - m)/2) * alpha`,
//! i.e. `alpha - y` where `m = -1`. Every weight, bias, pre-activation and
//! post-activation value in that execution is non-negative, while the final
//! outputs match the original network's to within float re-association
//! noise (`<= 1e-9`).
//!
//! Recurrent layers are treated as two linear neurons sharing one bias: the
//! input term rotates against the incoming bound, the feedback term against
//! the layer's own `g_max`, and the bias folds both negative-weight sums.

use crate::layer::{add_row_bias, conv_out, Layer, LayerCache, LayerError, LayerGrads};
use crate::network::{ForwardCache, Gradients, Network, NetworkError};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use thiserror::Error;

/// Logit agreement tolerance of the transform; pure re-association noise,
/// the two paths group the same products differently.
pub const ISO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("input bound must be non-negative, got {0}")]
    NegativeInputBound(f64),
    #[error("recurrent initial state must lie within [0, {bound}], found {value}")]
    InitialStateOutOfRange { bound: f64, value: f64 },
    #[error("transformed input must lie within [0, {bound}], found {value}")]
    InputOutOfRange { bound: f64, value: f64 },
    #[error("bundle does not match network at layer {index}")]
    BundleMismatch { index: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: LayerError },
}

/// Per-layer rotation data produced by the transform.
#[derive(Debug, Clone)]
pub enum LayerTransform {
    /// Pooling/flatten layers pass through untouched.
    Pass,
    Dense { mask: Tensor, alpha: f64 },
    Conv2D { mask: Tensor, alpha: f64 },
    Recurrent {
        mask_in: Tensor,
        mask_rec: Tensor,
        alpha_in: f64,
        alpha_rec: f64,
    },
}

/// Rotation masks and input shifting points for a transformed network. The
/// activation shifting points live in the transformed layers themselves.
#[derive(Debug, Clone)]
pub struct TransformBundle {
    /// Bound of the network inputs (`alpha` of layer 1).
    pub input_bound: f64,
    pub layers: Vec<LayerTransform>,
}

impl TransformBundle {
    /// `(c, alphas)` per layer for reporting; `None` for pass-through layers.
    pub fn summary(&self, net: &Network) -> Vec<Option<(f64, Vec<f64>)>> {
        self.layers
            .iter()
            .zip(&net.layers)
            .map(|(t, layer)| match t {
                LayerTransform::Pass => None,
                LayerTransform::Dense { alpha, .. } | LayerTransform::Conv2D { alpha, .. } => {
                    Some((layer.activation().map_or(0.0, |a| a.shift), vec![*alpha]))
                }
                LayerTransform::Recurrent {
                    alpha_in,
                    alpha_rec,
                    ..
                } => Some((
                    layer.activation().map_or(0.0, |a| a.shift),
                    vec![*alpha_in, *alpha_rec],
                )),
            })
            .collect()
    }
}

/// Sum of `|w|` over the negative entries of each row (a row being one
/// neuron's weights).
fn negative_row_sums(weights: &Tensor, row_len: usize) -> Vec<f64> {
    weights
        .data()
        .chunks(row_len)
        .map(|row| row.iter().filter(|&&w| w < 0.0).map(|w| -w).sum())
        .collect()
}

/// Folds an existing rotation into the layer so the transform can run on
/// plain linear semantics. A bundled layer computes
/// `sum_j w_ij (m_ij x_j + (1-m_ij)/2 alpha) + b_i`, which as a function of
/// `x` is a linear layer with signed weights `w * m` and per-neuron extra
/// bias `alpha * sum_{m_ij < 0} w_ij`. Without a prior mask this is the
/// identity.
fn effective_linear(
    weights: &Tensor,
    row_len: usize,
    prior: Option<(&Tensor, f64)>,
) -> Result<(Tensor, Vec<f64>), TransformError> {
    match prior {
        None => Ok((weights.clone(), vec![0.0; weights.len() / row_len])),
        Some((mask, alpha)) => {
            let w_eff = weights
                .mul(mask)
                .map_err(|_| TransformError::BundleMismatch { index: usize::MAX })?;
            let extra = weights
                .data()
                .chunks(row_len)
                .zip(mask.data().chunks(row_len))
                .map(|(wrow, mrow)| {
                    alpha
                        * wrow
                            .iter()
                            .zip(mrow)
                            .filter(|(_, &m)| m < 0.0)
                            .map(|(&w, _)| w)
                            .sum::<f64>()
                })
                .collect();
            Ok((w_eff, extra))
        }
    }
}

struct LinearTransform {
    weights: Tensor,
    bias: Tensor,
    mask: Tensor,
    c: f64,
}

/// The core per-layer rule: `b~ = b - alpha * sum_{w<0}|w|`, `c = max|b~|`,
/// `W' = |W|`, `b' = b~ + c`, `m = sign(W)`.
fn transform_linear(w_eff: &Tensor, b_eff: &[f64], row_len: usize, alpha: f64) -> LinearTransform {
    let neg = negative_row_sums(w_eff, row_len);
    let b_tilde: Vec<f64> = b_eff
        .iter()
        .zip(&neg)
        .map(|(&b, &s)| b - alpha * s)
        .collect();
    let c = b_tilde.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    LinearTransform {
        weights: w_eff.abs(),
        bias: Tensor::from_vec(b_tilde.iter().map(|&v| v + c).collect()),
        mask: w_eff.sign(),
        c,
    }
}

/// Produces the non-negative isomorphic network plus the rotation bundle.
/// Inputs must be known to lie in `[0, input_bound]`; both photonic
/// activations are bounded, so every layer qualifies.
pub fn nnt_transform(
    net: &Network,
    input_bound: f64,
) -> Result<(Network, TransformBundle), TransformError> {
    nnt_transform_model(net, None, input_bound)
}

/// Like [`nnt_transform`], but composes with a prior bundle when the network
/// is already transformed: the existing rotation is folded into effective
/// signed weights first, so transforming twice (or re-transforming after
/// non-negative post-training) stays equivalent to the underlying function.
pub fn nnt_transform_model(
    net: &Network,
    prior: Option<&TransformBundle>,
    input_bound: f64,
) -> Result<(Network, TransformBundle), TransformError> {
    if !(input_bound >= 0.0) {
        return Err(TransformError::NegativeInputBound(input_bound));
    }
    if let Some(p) = prior {
        if p.layers.len() != net.layers.len() {
            return Err(TransformError::BundleMismatch {
                index: p.layers.len().min(net.layers.len()),
            });
        }
    }
    let mut alpha = input_bound;
    let mut new_layers = Vec::with_capacity(net.layers.len());
    let mut transforms = Vec::with_capacity(net.layers.len());
    for (index, layer) in net.layers.iter().enumerate() {
        let prior_layer = prior.map(|p| &p.layers[index]);
        match layer {
            Layer::Dense(l) => {
                let old = match prior_layer {
                    None | Some(LayerTransform::Pass) => None,
                    Some(LayerTransform::Dense { mask, alpha }) => Some((mask, *alpha)),
                    Some(_) => return Err(TransformError::BundleMismatch { index }),
                };
                let (w_eff, extra) = effective_linear(&l.weights, l.in_dim(), old)
                    .map_err(|_| TransformError::BundleMismatch { index })?;
                let b_eff: Vec<f64> = l
                    .bias
                    .data()
                    .iter()
                    .zip(&extra)
                    .map(|(&b, &e)| b + e)
                    .collect();
                let lt = transform_linear(&w_eff, &b_eff, l.in_dim(), alpha);
                let mut out = l.clone();
                out.weights = lt.weights;
                out.bias = lt.bias;
                out.activation = l.activation.shifted_by(lt.c);
                transforms.push(LayerTransform::Dense {
                    mask: lt.mask,
                    alpha,
                });
                alpha = l.activation.range().1;
                new_layers.push(Layer::Dense(out));
            }
            Layer::Conv2D(l) => {
                // one linear neuron per output channel; the whole kernel of a
                // channel is that neuron's weight vector
                let old = match prior_layer {
                    None | Some(LayerTransform::Pass) => None,
                    Some(LayerTransform::Conv2D { mask, alpha }) => Some((mask, *alpha)),
                    Some(_) => return Err(TransformError::BundleMismatch { index }),
                };
                let kernel_len = l.weights.len() / l.out_channels();
                let (w_eff, extra) = effective_linear(&l.weights, kernel_len, old)
                    .map_err(|_| TransformError::BundleMismatch { index })?;
                let b_eff: Vec<f64> = l
                    .bias
                    .data()
                    .iter()
                    .zip(&extra)
                    .map(|(&b, &e)| b + e)
                    .collect();
                let lt = transform_linear(&w_eff, &b_eff, kernel_len, alpha);
                let mut out = l.clone();
                out.weights = lt.weights;
                out.bias = lt.bias;
                out.activation = l.activation.shifted_by(lt.c);
                transforms.push(LayerTransform::Conv2D {
                    mask: lt.mask,
                    alpha,
                });
                alpha = l.activation.range().1;
                new_layers.push(Layer::Conv2D(out));
            }
            Layer::Recurrent(l) => {
                let alpha_in = alpha;
                let alpha_rec = l.activation.range().1;
                for &h in l.h0.data() {
                    if !(0.0..=alpha_rec).contains(&h) {
                        return Err(TransformError::InitialStateOutOfRange {
                            bound: alpha_rec,
                            value: h,
                        });
                    }
                }
                let (old_in, old_rec) = match prior_layer {
                    None | Some(LayerTransform::Pass) => (None, None),
                    Some(LayerTransform::Recurrent {
                        mask_in,
                        mask_rec,
                        alpha_in,
                        alpha_rec,
                    }) => (Some((mask_in, *alpha_in)), Some((mask_rec, *alpha_rec))),
                    Some(_) => return Err(TransformError::BundleMismatch { index }),
                };
                let (w_in_eff, extra_in) = effective_linear(&l.w_in, l.in_dim(), old_in)
                    .map_err(|_| TransformError::BundleMismatch { index })?;
                let (w_rec_eff, extra_rec) = effective_linear(&l.w_rec, l.units(), old_rec)
                    .map_err(|_| TransformError::BundleMismatch { index })?;
                // the cell is two linear neurons sharing one bias: fold both
                // negative-weight sums into the same b~
                let neg_in = negative_row_sums(&w_in_eff, l.in_dim());
                let neg_rec = negative_row_sums(&w_rec_eff, l.units());
                let b_tilde: Vec<f64> = l
                    .bias
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| {
                        b + extra_in[i] + extra_rec[i]
                            - alpha_in * neg_in[i]
                            - alpha_rec * neg_rec[i]
                    })
                    .collect();
                let c = b_tilde.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
                let mut out = l.clone();
                out.w_in = w_in_eff.abs();
                out.w_rec = w_rec_eff.abs();
                out.bias = Tensor::from_vec(b_tilde.iter().map(|&v| v + c).collect());
                out.activation = l.activation.shifted_by(c);
                transforms.push(LayerTransform::Recurrent {
                    mask_in: w_in_eff.sign(),
                    mask_rec: w_rec_eff.sign(),
                    alpha_in,
                    alpha_rec,
                });
                alpha = l.activation.range().1;
                new_layers.push(Layer::Recurrent(out));
            }
            Layer::AvgPool2D(_) | Layer::Flatten => {
                // averaging and reshaping keep values inside [0, alpha]
                transforms.push(LayerTransform::Pass);
                new_layers.push(layer.clone());
            }
        }
    }
    let transformed = Network::new(net.input_shape.clone(), new_layers)?;
    Ok((
        transformed,
        TransformBundle {
            input_bound,
            layers: transforms,
        },
    ))
}

/// Rotated input feature: `m*y + ((1 - m)/2) * alpha`, which is `y` where
/// the original weight was non-negative and `alpha - y` where it was
/// negative. Exact for `m` in {-1, +1}.
#[inline]
fn rotate(y: f64, m: f64, alpha: f64) -> f64 {
    m * y + (0.5 - 0.5 * m) * alpha
}

/// `z = sum_j w_ij * rotate(x_j) + b_i` for a batch; weights non-negative,
/// accumulation over `j` ascending, bias added last.
fn rotated_linear(x: &Tensor, weights: &Tensor, bias: &Tensor, mask: &Tensor, alpha: f64) -> Tensor {
    let (b, m_dim) = (x.shape()[0], x.shape()[1]);
    let n = weights.shape()[0];
    let mut z = Tensor::zeros(&[b, n]);
    let xd = x.data();
    let wd = weights.data();
    let md = mask.data();
    let bd = bias.data();
    let zd = z.data_mut();
    for bi in 0..b {
        let xrow = &xd[bi * m_dim..(bi + 1) * m_dim];
        for i in 0..n {
            let wrow = &wd[i * m_dim..(i + 1) * m_dim];
            let mrow = &md[i * m_dim..(i + 1) * m_dim];
            let mut acc = 0.0;
            for j in 0..m_dim {
                acc += wrow[j] * rotate(xrow[j], mrow[j], alpha);
            }
            zd[bi * n + i] = acc + bd[i];
        }
    }
    z
}

/// Gradients of [`rotated_linear`]: the weight gradient sees the rotated
/// inputs, the input gradient flows through `w * m` (the original signed
/// weights).
fn rotated_linear_backward(
    dz: &Tensor,
    x: &Tensor,
    weights: &Tensor,
    mask: &Tensor,
    alpha: f64,
    need_dx: bool,
) -> Result<(Tensor, Tensor, Option<Tensor>), LayerError> {
    let (b, m_dim) = (x.shape()[0], x.shape()[1]);
    let n = weights.shape()[0];
    let mut dw = Tensor::zeros(weights.shape());
    let mut db = Tensor::zeros(&[n]);
    {
        let dwd = dw.data_mut();
        let xd = x.data();
        let md = mask.data();
        for bi in 0..b {
            let xrow = &xd[bi * m_dim..(bi + 1) * m_dim];
            for i in 0..n {
                let g = dz.at2(bi, i);
                db.data_mut()[i] += g;
                let dwrow = &mut dwd[i * m_dim..(i + 1) * m_dim];
                let mrow = &md[i * m_dim..(i + 1) * m_dim];
                for j in 0..m_dim {
                    dwrow[j] += g * rotate(xrow[j], mrow[j], alpha);
                }
            }
        }
    }
    let dx = if need_dx {
        let signed = weights.mul(mask)?;
        Some(dz.matmul(&signed)?)
    } else {
        None
    };
    Ok((dw, db, dx))
}

fn check_input_bound(x: &Tensor, bound: f64) -> Result<(), TransformError> {
    for &v in x.data() {
        if !(0.0..=bound).contains(&v) {
            return Err(TransformError::InputOutOfRange { bound, value: v });
        }
    }
    Ok(())
}

#[cfg(debug_assertions)]
fn debug_assert_nonneg(t: &Tensor, what: &str) {
    if let Ok(min) = t.min_value() {
        debug_assert!(min >= 0.0, "{what} went negative: {min}");
    }
}

#[cfg(not(debug_assertions))]
fn debug_assert_nonneg(_t: &Tensor, _what: &str) {}

/// Forward pass of a transformed network. Inputs must lie in
/// `[0, input_bound]`; the returned cache feeds [`nnf_backward`].
pub fn nnf_forward(
    net: &Network,
    bundle: &TransformBundle,
    x: &Tensor,
) -> Result<(Tensor, ForwardCache), TransformError> {
    if bundle.layers.len() != net.layers.len() {
        return Err(TransformError::BundleMismatch {
            index: bundle.layers.len().min(net.layers.len()),
        });
    }
    check_input_bound(x, bundle.input_bound)?;
    let mut cur = x.clone();
    let mut per_layer = Vec::with_capacity(net.layers.len());
    for (index, (layer, lt)) in net.layers.iter().zip(&bundle.layers).enumerate() {
        let bad_pair = || TransformError::BundleMismatch { index };
        let (y, cache) = match (layer, lt) {
            (Layer::Dense(l), LayerTransform::Dense { mask, alpha }) => {
                let z = rotated_linear(&cur, &l.weights, &l.bias, mask, *alpha);
                debug_assert_nonneg(&z, "dense pre-activation");
                let y = l.activation.apply_tensor(&z);
                debug_assert_nonneg(&y, "dense activation");
                (y, LayerCache::Dense { x: cur.clone(), z })
            }
            (Layer::Conv2D(l), LayerTransform::Conv2D { mask, alpha }) => {
                let (y, cache) = rotated_conv_forward(l, mask, *alpha, &cur)
                    .map_err(|source| TransformError::Layer { index, source })?;
                (y, cache)
            }
            (
                Layer::Recurrent(l),
                LayerTransform::Recurrent {
                    mask_in,
                    mask_rec,
                    alpha_in,
                    alpha_rec,
                },
            ) => {
                let (y, cache) =
                    rotated_recurrent_forward(l, mask_in, mask_rec, *alpha_in, *alpha_rec, &cur)
                        .map_err(|source| TransformError::Layer { index, source })?;
                (y, cache)
            }
            (Layer::AvgPool2D(_) | Layer::Flatten, LayerTransform::Pass) => layer
                .forward(&cur)
                .map_err(|source| TransformError::Layer { index, source })?,
            _ => return Err(bad_pair()),
        };
        per_layer.push(cache);
        cur = y;
    }
    Ok((cur, ForwardCache { per_layer }))
}

fn rotated_conv_forward(
    l: &crate::layer::Conv2DLayer,
    mask: &Tensor,
    alpha: f64,
    x: &Tensor,
) -> Result<(Tensor, LayerCache), LayerError> {
    // mirror of the plain conv forward with per-kernel-entry rotation
    let (kh, kw) = l.kernel();
    if x.rank() != 4 || x.shape()[1] != l.in_channels() {
        return Err(LayerError::BadInput {
            layer: "conv2d",
            expected: format!("[B, {}, >={}, >={}]", l.in_channels(), kh, kw),
            got: x.shape().to_vec(),
        });
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (d, s) = (l.out_channels(), l.stride);
    let (ho, wo) = (conv_out(h, kh, s), conv_out(w, kw, s));
    let mut z = Tensor::zeros(&[b, d, ho, wo]);
    let xd = x.data();
    let wd = l.weights.data();
    let md = mask.data();
    let bd = l.bias.data();
    let zd = z.data_mut();
    for bi in 0..b {
        for di in 0..d {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..kh {
                            let xrow = ((bi * c + ci) * h + (i * s + ki)) * w + j * s;
                            let wrow = ((di * c + ci) * kh + ki) * kw;
                            for kj in 0..kw {
                                acc += wd[wrow + kj]
                                    * rotate(xd[xrow + kj], md[wrow + kj], alpha);
                            }
                        }
                    }
                    zd[((bi * d + di) * ho + i) * wo + j] = acc + bd[di];
                }
            }
        }
    }
    debug_assert_nonneg(&z, "conv pre-activation");
    let y = l.activation.apply_tensor(&z);
    debug_assert_nonneg(&y, "conv activation");
    Ok((y, LayerCache::Conv2D { x: x.clone(), z }))
}

fn rotated_conv_backward(
    l: &crate::layer::Conv2DLayer,
    mask: &Tensor,
    alpha: f64,
    cache: &LayerCache,
    dy: &Tensor,
    need_dx: bool,
) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
    let LayerCache::Conv2D { x, z } = cache else {
        return Err(LayerError::StaleCache { layer: "conv2d" });
    };
    let (kh, kw) = l.kernel();
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (d, s) = (l.out_channels(), l.stride);
    let (ho, wo) = (conv_out(h, kh, s), conv_out(w, kw, s));
    let dz = dy.mul(&l.activation.grad_tensor(z))?;
    let signed = l.weights.mul(mask)?;
    let dzd = dz.data();
    let xd = x.data();
    let md = mask.data();
    let sd = signed.data();
    let mut dw = Tensor::zeros(l.weights.shape());
    let mut db = Tensor::zeros(l.bias.shape());
    let mut dx = if need_dx {
        Some(Tensor::zeros(x.shape()))
    } else {
        None
    };
    for bi in 0..b {
        for di in 0..d {
            for i in 0..ho {
                for j in 0..wo {
                    let g = dzd[((bi * d + di) * ho + i) * wo + j];
                    db.data_mut()[di] += g;
                    for ci in 0..c {
                        for ki in 0..kh {
                            let xrow = ((bi * c + ci) * h + (i * s + ki)) * w + j * s;
                            let wrow = ((di * c + ci) * kh + ki) * kw;
                            for kj in 0..kw {
                                dw.data_mut()[wrow + kj] +=
                                    g * rotate(xd[xrow + kj], md[wrow + kj], alpha);
                            }
                            if let Some(dx) = dx.as_mut() {
                                for kj in 0..kw {
                                    dx.data_mut()[xrow + kj] += g * sd[wrow + kj];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((LayerGrads::Conv2D { dw, db }, dx))
}

fn rotated_recurrent_forward(
    l: &crate::layer::RecurrentLayer,
    mask_in: &Tensor,
    mask_rec: &Tensor,
    alpha_in: f64,
    alpha_rec: f64,
    x: &Tensor,
) -> Result<(Tensor, LayerCache), LayerError> {
    if x.rank() != 3 || x.shape()[2] != l.in_dim() || x.shape()[1] == 0 {
        return Err(LayerError::BadInput {
            layer: "recurrent",
            expected: format!("[B, T>=1, {}]", l.in_dim()),
            got: x.shape().to_vec(),
        });
    }
    let (b, t, m) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = l.units();
    // time-major copy, matching the plain path
    let mut xs = Tensor::zeros(&[t, b, m]);
    for bi in 0..b {
        for ti in 0..t {
            let src = (bi * t + ti) * m;
            let dst = (ti * b + bi) * m;
            xs.data_mut()[dst..dst + m].copy_from_slice(&x.data()[src..src + m]);
        }
    }
    let mut zs = Tensor::zeros(&[t, b, n]);
    let mut ys = Tensor::zeros(&[t, b, n]);
    let mut prev = {
        let mut h = Tensor::zeros(&[b, n]);
        for row in 0..b {
            h.data_mut()[row * n..(row + 1) * n].copy_from_slice(l.h0.data());
        }
        h
    };
    let zero_bias = Tensor::zeros(&[n]);
    for ti in 0..t {
        let start = ti * b * m;
        let xt = Tensor::new(vec![b, m], xs.data()[start..start + b * m].to_vec())
            .expect("slice shape");
        // input term carries the bias; the feedback term adds on top
        let mut z = rotated_linear(&xt, &l.w_in, &zero_bias, mask_in, alpha_in);
        let rec = rotated_linear(&prev, &l.w_rec, &zero_bias, mask_rec, alpha_rec);
        z = z.add(&rec)?;
        add_row_bias(&mut z, &l.bias);
        debug_assert_nonneg(&z, "recurrent pre-activation");
        let y = l.activation.apply_tensor(&z);
        debug_assert_nonneg(&y, "recurrent activation");
        let start = ti * b * n;
        zs.data_mut()[start..start + b * n].copy_from_slice(z.data());
        ys.data_mut()[start..start + b * n].copy_from_slice(y.data());
        prev = y;
    }
    Ok((prev, LayerCache::Recurrent { xs, zs, ys }))
}

#[allow(clippy::too_many_arguments)]
fn rotated_recurrent_backward(
    l: &crate::layer::RecurrentLayer,
    mask_in: &Tensor,
    mask_rec: &Tensor,
    alpha_in: f64,
    alpha_rec: f64,
    cache: &LayerCache,
    dy: &Tensor,
    need_dx: bool,
) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
    let LayerCache::Recurrent { xs, zs, ys } = cache else {
        return Err(LayerError::StaleCache { layer: "recurrent" });
    };
    let (t, b, m) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
    let n = l.units();
    if dy.shape() != [b, n] {
        return Err(LayerError::StaleCache { layer: "recurrent" });
    }
    let slice = |buf: &Tensor, ti: usize, cols: usize| {
        let start = ti * b * cols;
        Tensor::new(vec![b, cols], buf.data()[start..start + b * cols].to_vec())
            .expect("slice shape")
    };
    let mut dw_in = Tensor::zeros(l.w_in.shape());
    let mut dw_rec = Tensor::zeros(l.w_rec.shape());
    let mut db = Tensor::zeros(l.bias.shape());
    let mut dxs = if need_dx {
        Some(Tensor::zeros(&[t, b, m]))
    } else {
        None
    };
    let signed_rec = l.w_rec.mul(mask_rec)?;
    let mut dh = dy.clone();
    for ti in (0..t).rev() {
        let z = slice(zs, ti, n);
        let dz = dh.mul(&l.activation.grad_tensor(&z))?;
        let xt = slice(xs, ti, m);
        let y_prev = if ti == 0 {
            let mut h = Tensor::zeros(&[b, n]);
            for row in 0..b {
                h.data_mut()[row * n..(row + 1) * n].copy_from_slice(l.h0.data());
            }
            h
        } else {
            slice(ys, ti - 1, n)
        };
        let (dwi, dbi, dxt) =
            rotated_linear_backward(&dz, &xt, &l.w_in, mask_in, alpha_in, need_dx)?;
        let (dwr, _, _) =
            rotated_linear_backward(&dz, &y_prev, &l.w_rec, mask_rec, alpha_rec, false)?;
        dw_in = dw_in.add(&dwi)?;
        dw_rec = dw_rec.add(&dwr)?;
        db = db.add(&dbi)?;
        if let (Some(dxs), Some(dxt)) = (dxs.as_mut(), dxt) {
            let start = ti * b * m;
            dxs.data_mut()[start..start + b * m].copy_from_slice(dxt.data());
        }
        dh = dz.matmul(&signed_rec)?;
    }
    let dx = dxs.map(|dxs| {
        let mut out = Tensor::zeros(&[b, t, m]);
        for ti in 0..t {
            for bi in 0..b {
                let src = (ti * b + bi) * m;
                let dst = (bi * t + ti) * m;
                out.data_mut()[dst..dst + m].copy_from_slice(&dxs.data()[src..src + m]);
            }
        }
        out
    });
    Ok((
        LayerGrads::Recurrent {
            dw_in,
            dw_rec,
            db,
        },
        dx,
    ))
}

/// Backward pass matching [`nnf_forward`]; gradients address the transformed
/// parameters, so non-negative post-training can continue from here.
pub fn nnf_backward(
    net: &Network,
    bundle: &TransformBundle,
    cache: &ForwardCache,
    dlogits: &Tensor,
) -> Result<Gradients, TransformError> {
    if cache.per_layer.len() != net.layers.len() || bundle.layers.len() != net.layers.len() {
        return Err(TransformError::Network(NetworkError::StaleCache));
    }
    let mut per_layer = vec![LayerGrads::None; net.layers.len()];
    let mut dy = dlogits.clone();
    for index in (0..net.layers.len()).rev() {
        let need_dx = index > 0;
        let layer = &net.layers[index];
        let lt = &bundle.layers[index];
        let (grads, dx) = match (layer, lt) {
            (Layer::Dense(l), LayerTransform::Dense { mask, alpha }) => {
                let LayerCache::Dense { x, z } = &cache.per_layer[index] else {
                    return Err(TransformError::Network(NetworkError::StaleCache));
                };
                let dz = dy
                    .mul(&l.activation.grad_tensor(z))
                    .map_err(|e| TransformError::Layer {
                        index,
                        source: e.into(),
                    })?;
                let (dw, db, dx) =
                    rotated_linear_backward(&dz, x, &l.weights, mask, *alpha, need_dx)
                        .map_err(|source| TransformError::Layer { index, source })?;
                (LayerGrads::Dense { dw, db }, dx)
            }
            (Layer::Conv2D(l), LayerTransform::Conv2D { mask, alpha }) => {
                rotated_conv_backward(l, mask, *alpha, &cache.per_layer[index], &dy, need_dx)
                    .map_err(|source| TransformError::Layer { index, source })?
            }
            (
                Layer::Recurrent(l),
                LayerTransform::Recurrent {
                    mask_in,
                    mask_rec,
                    alpha_in,
                    alpha_rec,
                },
            ) => rotated_recurrent_backward(
                l,
                mask_in,
                mask_rec,
                *alpha_in,
                *alpha_rec,
                &cache.per_layer[index],
                &dy,
                need_dx,
            )
            .map_err(|source| TransformError::Layer { index, source })?,
            (Layer::AvgPool2D(_) | Layer::Flatten, LayerTransform::Pass) => layer
                .backward(&cache.per_layer[index], &dy, need_dx)
                .map_err(|source| TransformError::Layer { index, source })?,
            _ => return Err(TransformError::BundleMismatch { index }),
        };
        per_layer[index] = grads;
        if index > 0 {
            dy = dx.ok_or(TransformError::Network(NetworkError::StaleCache))?;
        }
    }
    Ok(Gradients { per_layer })
}

/// Smallest value among all cached pre-activations and the activations
/// recomputed from them.
pub fn min_intermediate(net: &Network, cache: &ForwardCache) -> f64 {
    let mut min = f64::INFINITY;
    for (layer, lc) in net.layers.iter().zip(&cache.per_layer) {
        match (layer.activation(), lc) {
            (Some(act), LayerCache::Dense { z, .. } | LayerCache::Conv2D { z, .. }) => {
                if let Ok(v) = z.min_value() {
                    min = min.min(v);
                }
                if let Ok(v) = act.apply_tensor(z).min_value() {
                    min = min.min(v);
                }
            }
            (_, LayerCache::Recurrent { zs, ys, .. }) => {
                if let Ok(v) = zs.min_value() {
                    min = min.min(v);
                }
                if let Ok(v) = ys.min_value() {
                    min = min.min(v);
                }
            }
            _ => {}
        }
    }
    min
}

/// Result of sampling-based equivalence verification between a network and
/// its transformed form.
#[derive(Debug, Clone)]
pub struct IsomorphismReport {
    pub samples: usize,
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    /// Fraction of samples whose predicted class agrees.
    pub prediction_agreement: f64,
    pub min_transformed_param: f64,
    pub min_intermediate: f64,
    pub tolerance: f64,
}

impl IsomorphismReport {
    pub fn passed(&self) -> bool {
        self.max_abs_deviation <= self.tolerance
            && self.prediction_agreement == 1.0
            && self.min_transformed_param >= 0.0
            && self.min_intermediate >= 0.0
    }
}

impl std::fmt::Display for IsomorphismReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "samples:                {}", self.samples)?;
        writeln!(f, "max |delta logit|:      {:e}", self.max_abs_deviation)?;
        writeln!(f, "max relative delta:     {:e}", self.max_rel_deviation)?;
        writeln!(
            f,
            "prediction agreement:   {:.2}%",
            100.0 * self.prediction_agreement
        )?;
        writeln!(f, "min transformed param:  {:e}", self.min_transformed_param)?;
        writeln!(f, "min intermediate value: {:e}", self.min_intermediate)?;
        write!(
            f,
            "verdict:                {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares the original and transformed networks on `samples` random inputs
/// drawn uniformly from `[0, input_bound]`, and audits non-negativity of the
/// transformed parameters and intermediates.
pub fn verify_isomorphism(
    original: &Network,
    transformed: &Network,
    bundle: &TransformBundle,
    samples: usize,
    seed: u64,
) -> Result<IsomorphismReport, TransformError> {
    let mut rng = SeededRng::new(seed);
    let mut shape = vec![samples];
    shape.extend_from_slice(&original.input_shape);
    let n: usize = shape.iter().product();
    let x = Tensor::new(
        shape.clone(),
        (0..n)
            .map(|_| rng.uniform_range(0.0, bundle.input_bound))
            .collect(),
    )
    .expect("sample shape");

    let (logits_a, _) = original.forward(&x)?;
    let (logits_b, cache_b) = nnf_forward(transformed, bundle, &x)?;

    let mut max_abs = 0.0_f64;
    let mut max_rel = 0.0_f64;
    for (&a, &b) in logits_a.data().iter().zip(logits_b.data()) {
        let d = (a - b).abs();
        max_abs = max_abs.max(d);
        max_rel = max_rel.max(d / a.abs().max(1e-300));
    }
    let preds_a = original.predictions(&logits_a);
    let preds_b = transformed.predictions(&logits_b);
    let agree = preds_a
        .iter()
        .zip(&preds_b)
        .filter(|(a, b)| a == b)
        .count() as f64
        / samples as f64;

    Ok(IsomorphismReport {
        samples,
        max_abs_deviation: max_abs,
        max_rel_deviation: max_rel,
        prediction_agreement: agree,
        min_transformed_param: transformed.min_param(),
        min_intermediate: min_intermediate(transformed, &cache_b),
        tolerance: ISO_TOLERANCE,
    })
}
