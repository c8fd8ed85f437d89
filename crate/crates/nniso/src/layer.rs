//! Layer definitions with hand-written forward and backward passes.
//!
//! Shapes use a leading batch dimension. A recurrent layer receives a whole
//! sequence as `[B, T, M]`, iterates it time-major internally, and emits the
//! final hidden state `[B, N]`. Convolutions are valid-only (no padding);
//! pooling is non-overlapping averaging.

use crate::activation::Activation;
use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("input shape {got:?} incompatible with {layer} expecting {expected}")]
    BadInput {
        layer: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("stale or mismatched cache for {layer}")]
    StaleCache { layer: &'static str },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[N_out, N_in]`
    pub weights: Tensor,
    /// `[N_out]`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct Conv2DLayer {
    /// `[D, C, Kh, Kw]`
    pub weights: Tensor,
    /// `[D]`
    pub bias: Tensor,
    pub stride: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct RecurrentLayer {
    /// `[N, M]`
    pub w_in: Tensor,
    /// `[N, N]`
    pub w_rec: Tensor,
    /// `[N]`
    pub bias: Tensor,
    pub activation: Activation,
    /// Initial hidden state, zeros by default.
    pub h0: Tensor,
}

#[derive(Debug, Clone)]
pub struct AvgPool2DLayer {
    pub size: usize,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv2D(Conv2DLayer),
    Recurrent(RecurrentLayer),
    AvgPool2D(AvgPool2DLayer),
    Flatten,
}

/// Everything the backward pass needs from the matching forward call.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense {
        /// layer input `[B, M]`
        x: Tensor,
        /// pre-activation `[B, N]`
        z: Tensor,
    },
    Conv2D {
        x: Tensor,
        z: Tensor,
    },
    Recurrent {
        /// time-major inputs `[T, B, M]`
        xs: Tensor,
        /// pre-activations `[T, B, N]`
        zs: Tensor,
        /// hidden states `[T, B, N]`
        ys: Tensor,
    },
    AvgPool2D {
        in_shape: Vec<usize>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { dw: Tensor, db: Tensor },
    Conv2D { dw: Tensor, db: Tensor },
    Recurrent { dw_in: Tensor, dw_rec: Tensor, db: Tensor },
    None,
}

pub(crate) fn add_row_bias(z: &mut Tensor, bias: &Tensor) {
    let n = bias.len();
    let b = z.len() / n;
    let zd = z.data_mut();
    let bd = bias.data();
    for row in 0..b {
        let dst = &mut zd[row * n..(row + 1) * n];
        for j in 0..n {
            dst[j] += bd[j];
        }
    }
}

/// Output spatial extent for a valid convolution/pool window.
pub(crate) fn conv_out(extent: usize, window: usize, stride: usize) -> usize {
    (extent - window) / stride + 1
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache), LayerError> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim() {
            return Err(LayerError::BadInput {
                layer: "dense",
                expected: format!("[B, {}]", self.in_dim()),
                got: x.shape().to_vec(),
            });
        }
        let mut z = x.matmul_nt(&self.weights)?;
        add_row_bias(&mut z, &self.bias);
        let y = self.activation.apply_tensor(&z);
        Ok((
            y,
            LayerCache::Dense {
                x: x.clone(),
                z,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &LayerCache,
        dy: &Tensor,
        need_dx: bool,
    ) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
        let LayerCache::Dense { x, z } = cache else {
            return Err(LayerError::StaleCache { layer: "dense" });
        };
        if dy.shape() != z.shape() || x.shape()[0] != z.shape()[0] {
            return Err(LayerError::StaleCache { layer: "dense" });
        }
        let dz = dy.mul(&self.activation.grad_tensor(z))?;
        let (dw, db) = dense_grads(&dz, x)?;
        let dx = if need_dx {
            Some(dz.matmul(&self.weights)?)
        } else {
            None
        };
        Ok((LayerGrads::Dense { dw, db }, dx))
    }
}

/// Weight/bias gradients of a linear map given `dL/dz` and the input; shared
/// by the plain and the transformed dense paths.
pub(crate) fn dense_grads(dz: &Tensor, x: &Tensor) -> Result<(Tensor, Tensor), LayerError> {
    let dw = dz.matmul_tn(x)?;
    let n = dz.shape()[1];
    let mut db = Tensor::zeros(&[n]);
    for row in 0..dz.shape()[0] {
        for j in 0..n {
            db.data_mut()[j] += dz.at2(row, j);
        }
    }
    Ok((dw, db))
}

impl Conv2DLayer {
    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize), LayerError> {
        let (kh, kw) = self.kernel();
        let ok = x.rank() == 4
            && x.shape()[1] == self.in_channels()
            && x.shape()[2] >= kh
            && x.shape()[3] >= kw;
        if !ok {
            return Err(LayerError::BadInput {
                layer: "conv2d",
                expected: format!("[B, {}, >={}, >={}]", self.in_channels(), kh, kw),
                got: x.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache), LayerError> {
        let (b, c, h, w) = self.check_input(x)?;
        let (kh, kw) = self.kernel();
        let (d, s) = (self.out_channels(), self.stride);
        let (ho, wo) = (conv_out(h, kh, s), conv_out(w, kw, s));
        let mut z = Tensor::zeros(&[b, d, ho, wo]);
        let xd = x.data();
        let wd = self.weights.data();
        let bd = self.bias.data();
        let zd = z.data_mut();
        for bi in 0..b {
            for di in 0..d {
                for i in 0..ho {
                    for j in 0..wo {
                        // patch sum first, bias last, exactly like the
                        // flattened-patch linear-neuron form
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for ki in 0..kh {
                                let xrow = ((bi * c + ci) * h + (i * s + ki)) * w + j * s;
                                let wrow = ((di * c + ci) * kh + ki) * kw;
                                for kj in 0..kw {
                                    acc += wd[wrow + kj] * xd[xrow + kj];
                                }
                            }
                        }
                        zd[((bi * d + di) * ho + i) * wo + j] = acc + bd[di];
                    }
                }
            }
        }
        let y = self.activation.apply_tensor(&z);
        Ok((
            y,
            LayerCache::Conv2D {
                x: x.clone(),
                z,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &LayerCache,
        dy: &Tensor,
        need_dx: bool,
    ) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
        let LayerCache::Conv2D { x, z } = cache else {
            return Err(LayerError::StaleCache { layer: "conv2d" });
        };
        if dy.shape() != z.shape() {
            return Err(LayerError::StaleCache { layer: "conv2d" });
        }
        let (b, c, h, w) = self.check_input(x)?;
        let (kh, kw) = self.kernel();
        let (d, s) = (self.out_channels(), self.stride);
        let (ho, wo) = (conv_out(h, kh, s), conv_out(w, kw, s));
        let dz = dy.mul(&self.activation.grad_tensor(z))?;
        let dzd = dz.data();
        let xd = x.data();
        let wd = self.weights.data();
        let mut dw = Tensor::zeros(self.weights.shape());
        let mut db = Tensor::zeros(self.bias.shape());
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
                                    dw.data_mut()[wrow + kj] += g * xd[xrow + kj];
                                }
                                if let Some(dx) = dx.as_mut() {
                                    for kj in 0..kw {
                                        dx.data_mut()[xrow + kj] += g * wd[wrow + kj];
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
}

impl RecurrentLayer {
    pub fn units(&self) -> usize {
        self.w_in.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w_in.shape()[1]
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize), LayerError> {
        if x.rank() != 3 || x.shape()[2] != self.in_dim() || x.shape()[1] == 0 {
            return Err(LayerError::BadInput {
                layer: "recurrent",
                expected: format!("[B, T>=1, {}]", self.in_dim()),
                got: x.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
    }

    /// Reorder `[B, T, M]` to time-major `[T, B, M]`.
    fn to_time_major(x: &Tensor, b: usize, t: usize, m: usize) -> Tensor {
        let mut out = Tensor::zeros(&[t, b, m]);
        for bi in 0..b {
            for ti in 0..t {
                let src = (bi * t + ti) * m;
                let dst = (ti * b + bi) * m;
                out.data_mut()[dst..dst + m].copy_from_slice(&x.data()[src..src + m]);
            }
        }
        out
    }

    fn step_slice(buf: &Tensor, t: usize, rows: usize, cols: usize) -> Tensor {
        let start = t * rows * cols;
        Tensor::new(
            vec![rows, cols],
            buf.data()[start..start + rows * cols].to_vec(),
        )
        .expect("slice shape")
    }

    fn h0_rows(&self, b: usize) -> Tensor {
        let n = self.units();
        let mut out = Tensor::zeros(&[b, n]);
        for row in 0..b {
            out.data_mut()[row * n..(row + 1) * n].copy_from_slice(self.h0.data());
        }
        out
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache), LayerError> {
        let (b, t, m) = self.check_input(x)?;
        let n = self.units();
        let xs = Self::to_time_major(x, b, t, m);
        let mut zs = Tensor::zeros(&[t, b, n]);
        let mut ys = Tensor::zeros(&[t, b, n]);
        let mut prev = self.h0_rows(b);
        for ti in 0..t {
            let xt = Self::step_slice(&xs, ti, b, m);
            let mut z = xt.matmul_nt(&self.w_in)?;
            let rec = prev.matmul_nt(&self.w_rec)?;
            z = z.add(&rec)?;
            add_row_bias(&mut z, &self.bias);
            let y = self.activation.apply_tensor(&z);
            let start = ti * b * n;
            zs.data_mut()[start..start + b * n].copy_from_slice(z.data());
            ys.data_mut()[start..start + b * n].copy_from_slice(y.data());
            prev = y;
        }
        Ok((prev, LayerCache::Recurrent { xs, zs, ys }))
    }

    /// Full backpropagation through time. `dy` is the gradient w.r.t. the
    /// final hidden state.
    pub fn backward(
        &self,
        cache: &LayerCache,
        dy: &Tensor,
        need_dx: bool,
    ) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
        let LayerCache::Recurrent { xs, zs, ys } = cache else {
            return Err(LayerError::StaleCache { layer: "recurrent" });
        };
        let (t, b, m) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let n = self.units();
        if dy.shape() != [b, n] {
            return Err(LayerError::StaleCache { layer: "recurrent" });
        }
        let mut dw_in = Tensor::zeros(self.w_in.shape());
        let mut dw_rec = Tensor::zeros(self.w_rec.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        let mut dxs = if need_dx {
            Some(Tensor::zeros(&[t, b, m]))
        } else {
            None
        };
        let mut dh = dy.clone();
        for ti in (0..t).rev() {
            let z = Self::step_slice(zs, ti, b, n);
            let dz = dh.mul(&self.activation.grad_tensor(&z))?;
            let xt = Self::step_slice(xs, ti, b, m);
            let y_prev = if ti == 0 {
                self.h0_rows(b)
            } else {
                Self::step_slice(ys, ti - 1, b, n)
            };
            dw_in = dw_in.add(&dz.matmul_tn(&xt)?)?;
            dw_rec = dw_rec.add(&dz.matmul_tn(&y_prev)?)?;
            for row in 0..b {
                for j in 0..n {
                    db.data_mut()[j] += dz.at2(row, j);
                }
            }
            if let Some(dxs) = dxs.as_mut() {
                let dxt = dz.matmul(&self.w_in)?;
                let start = ti * b * m;
                dxs.data_mut()[start..start + b * m].copy_from_slice(dxt.data());
            }
            dh = dz.matmul(&self.w_rec)?;
        }
        // back to batch-major [B, T, M]
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
}

impl AvgPool2DLayer {
    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize), LayerError> {
        if x.rank() != 4 || x.shape()[2] < self.size || x.shape()[3] < self.size {
            return Err(LayerError::BadInput {
                layer: "avg_pool2d",
                expected: format!("[B, C, >={0}, >={0}]", self.size),
                got: x.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache), LayerError> {
        let (b, c, h, w) = self.check_input(x)?;
        let p = self.size;
        let (ho, wo) = (h / p, w / p);
        let mut y = Tensor::zeros(&[b, c, ho, wo]);
        let inv = 1.0 / (p * p) as f64;
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for u in 0..p {
                            let row = ((bi * c + ci) * h + (i * p + u)) * w + j * p;
                            for v in 0..p {
                                acc += x.data()[row + v];
                            }
                        }
                        y.data_mut()[((bi * c + ci) * ho + i) * wo + j] = acc * inv;
                    }
                }
            }
        }
        Ok((
            y,
            LayerCache::AvgPool2D {
                in_shape: x.shape().to_vec(),
            },
        ))
    }

    pub fn backward(&self, cache: &LayerCache, dy: &Tensor) -> Result<Tensor, LayerError> {
        let LayerCache::AvgPool2D { in_shape } = cache else {
            return Err(LayerError::StaleCache { layer: "avg_pool2d" });
        };
        let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let p = self.size;
        let (ho, wo) = (h / p, w / p);
        let inv = 1.0 / (p * p) as f64;
        let mut dx = Tensor::zeros(in_shape);
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let g = dy.data()[((bi * c + ci) * ho + i) * wo + j] * inv;
                        for u in 0..p {
                            let row = ((bi * c + ci) * h + (i * p + u)) * w + j * p;
                            for v in 0..p {
                                dx.data_mut()[row + v] += g;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2D(_) => "conv2d",
            Layer::Recurrent(_) => "recurrent",
            Layer::AvgPool2D(_) => "avg_pool2d",
            Layer::Flatten => "flatten",
        }
    }

    pub fn activation(&self) -> Option<&Activation> {
        match self {
            Layer::Dense(l) => Some(&l.activation),
            Layer::Conv2D(l) => Some(&l.activation),
            Layer::Recurrent(l) => Some(&l.activation),
            _ => None,
        }
    }

    pub fn has_params(&self) -> bool {
        self.activation().is_some()
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weights.len() + l.bias.len(),
            Layer::Conv2D(l) => l.weights.len() + l.bias.len(),
            Layer::Recurrent(l) => l.w_in.len() + l.w_rec.len() + l.bias.len(),
            _ => 0,
        }
    }

    /// Sample-shape propagation (no batch dimension).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        match self {
            Layer::Dense(l) => {
                if input == [l.in_dim()] {
                    Ok(vec![l.out_dim()])
                } else {
                    Err(LayerError::BadInput {
                        layer: "dense",
                        expected: format!("[{}]", l.in_dim()),
                        got: input.to_vec(),
                    })
                }
            }
            Layer::Conv2D(l) => {
                let (kh, kw) = l.kernel();
                if input.len() == 3
                    && input[0] == l.in_channels()
                    && input[1] >= kh
                    && input[2] >= kw
                {
                    Ok(vec![
                        l.out_channels(),
                        conv_out(input[1], kh, l.stride),
                        conv_out(input[2], kw, l.stride),
                    ])
                } else {
                    Err(LayerError::BadInput {
                        layer: "conv2d",
                        expected: format!("[{}, >={}, >={}]", l.in_channels(), kh, kw),
                        got: input.to_vec(),
                    })
                }
            }
            Layer::Recurrent(l) => {
                if input.len() == 2 && input[1] == l.in_dim() && input[0] >= 1 {
                    Ok(vec![l.units()])
                } else {
                    Err(LayerError::BadInput {
                        layer: "recurrent",
                        expected: format!("[T, {}]", l.in_dim()),
                        got: input.to_vec(),
                    })
                }
            }
            Layer::AvgPool2D(l) => {
                if input.len() == 3 && input[1] >= l.size && input[2] >= l.size {
                    Ok(vec![input[0], input[1] / l.size, input[2] / l.size])
                } else {
                    Err(LayerError::BadInput {
                        layer: "avg_pool2d",
                        expected: format!("[C, >={0}, >={0}]", l.size),
                        got: input.to_vec(),
                    })
                }
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache), LayerError> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2D(l) => l.forward(x),
            Layer::Recurrent(l) => l.forward(x),
            Layer::AvgPool2D(l) => l.forward(x),
            Layer::Flatten => {
                let in_shape = x.shape().to_vec();
                let b = in_shape[0];
                let rest: usize = in_shape[1..].iter().product();
                let y = x.clone().reshape(&[b, rest])?;
                Ok((y, LayerCache::Flatten { in_shape }))
            }
        }
    }

    pub fn backward(
        &self,
        cache: &LayerCache,
        dy: &Tensor,
        need_dx: bool,
    ) -> Result<(LayerGrads, Option<Tensor>), LayerError> {
        match self {
            Layer::Dense(l) => l.backward(cache, dy, need_dx),
            Layer::Conv2D(l) => l.backward(cache, dy, need_dx),
            Layer::Recurrent(l) => l.backward(cache, dy, need_dx),
            Layer::AvgPool2D(l) => {
                let dx = l.backward(cache, dy)?;
                Ok((LayerGrads::None, Some(dx)))
            }
            Layer::Flatten => {
                let LayerCache::Flatten { in_shape } = cache else {
                    return Err(LayerError::StaleCache { layer: "flatten" });
                };
                Ok((LayerGrads::None, Some(dy.clone().reshape(in_shape)?)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_hand_example() {
        let layer = DenseLayer {
            weights: Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap(),
            bias: Tensor::from_vec(vec![0.5]),
            activation: Activation::photonic_sinusoidal(),
        };
        let x = Tensor::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        let LayerCache::Dense { z, .. } = &cache else {
            unreachable!()
        };
        assert!((z.data()[0] - 1.0).abs() < 1e-15);
        assert!((y.data()[0] - 1.0).abs() < 1e-12); // sin^2(pi/2) = 1
    }

    #[test]
    fn dense_grads_linear_loss() {
        // L = z with x = [1, 2] gives dW = [1, 2], db = 1
        let dz = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (dw, db) = dense_grads(&dz, &x).unwrap();
        assert_eq!(dw.data(), &[1.0, 2.0]);
        assert_eq!(db.data(), &[1.0]);
    }

    #[test]
    fn conv_forward_hand_example() {
        let layer = Conv2DLayer {
            weights: Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap(),
            bias: Tensor::from_vec(vec![0.0]),
            stride: 1,
            activation: Activation::photonic_sinusoidal(),
        };
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let LayerCache::Conv2D { z, .. } = &cache else {
            unreachable!()
        };
        assert_eq!(z.shape(), &[1, 1, 1, 1]);
        assert_eq!(z.data()[0], 10.0);
    }

    #[test]
    fn recurrent_constant_bias_steps() {
        let n = 1;
        let layer = RecurrentLayer {
            w_in: Tensor::zeros(&[n, 1]),
            w_rec: Tensor::zeros(&[n, n]),
            bias: Tensor::from_vec(vec![0.5]),
            activation: Activation::photonic_sinusoidal(),
            h0: Tensor::zeros(&[n]),
        };
        let x = Tensor::zeros(&[1, 3, 1]);
        let (y, cache) = layer.forward(&x).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12); // sin^2(pi/4) each step
        let LayerCache::Recurrent { ys, .. } = &cache else {
            unreachable!()
        };
        for t in 0..3 {
            assert!((ys.data()[t] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn recurrent_matches_unrolled_oracle() {
        // brute-force unrolled recursion oracle with scalar arithmetic
        let layer = RecurrentLayer {
            w_in: Tensor::from_rows(&[vec![0.4], vec![-0.3]]).unwrap(),
            w_rec: Tensor::from_rows(&[vec![0.2, -0.1], vec![0.05, 0.3]]).unwrap(),
            bias: Tensor::from_vec(vec![0.1, -0.2]),
            activation: Activation::photonic_sigmoid(),
            h0: Tensor::zeros(&[2]),
        };
        let seq = [0.3, 0.8, 0.1];
        let x = Tensor::new(vec![1, 3, 1], seq.to_vec()).unwrap();
        let (y, _) = layer.forward(&x).unwrap();

        let act = Activation::photonic_sigmoid();
        let mut h = [0.0_f64, 0.0];
        for &xv in &seq {
            let z0 = 0.4 * xv + 0.2 * h[0] + (-0.1) * h[1] + 0.1;
            let z1 = -0.3 * xv + 0.05 * h[0] + 0.3 * h[1] + (-0.2);
            h = [act.apply(z0), act.apply(z1)];
        }
        assert!((y.data()[0] - h[0]).abs() < 1e-12);
        assert!((y.data()[1] - h[1]).abs() < 1e-12);
    }

    #[test]
    fn avg_pool_roundtrip() {
        let layer = AvgPool2DLayer { size: 2 };
        let x = Tensor::new(
            vec![1, 1, 2, 4],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[3.5, 5.5]);
        let dy = Tensor::new(vec![1, 1, 1, 2], vec![4.0, 8.0]).unwrap();
        let dx = layer.backward(&cache, &dy).unwrap();
        assert_eq!(dx.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn bad_shapes_are_reported() {
        let layer = DenseLayer {
            weights: Tensor::zeros(&[3, 4]),
            bias: Tensor::zeros(&[3]),
            activation: Activation::photonic_sigmoid(),
        };
        let err = layer.forward(&Tensor::zeros(&[2, 5])).unwrap_err();
        assert!(err.to_string().contains("dense"));
    }
}
