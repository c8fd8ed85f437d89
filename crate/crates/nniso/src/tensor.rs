//! Dense row-major tensors of `f64`.
//!
//! Deliberately minimal: exactly the arithmetic the layers, transform and
//! optimizers need, all single-threaded with a fixed summation order so that
//! repeated runs produce bit-identical results. 64-bit floats throughout;
//! the transform's equivalence guarantee (`<= 1e-9` logit drift) leaves no
//! room for single precision.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} requires a non-empty tensor")]
    Empty { op: &'static str },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    Size { shape: Vec<usize>, len: usize },
    #[error("non-finite value detected in {context}")]
    NonFinite { context: String },
}

/// Four-lane dot product with a fixed fold order. Independent accumulators
/// let the CPU overlap the add chains without introducing any run-to-run
/// nondeterminism.
pub(crate) fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let k = a.len();
    let chunks = k / 4;
    let (mut l0, mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let p = 4 * c;
        l0 += a[p] * b[p];
        l1 += a[p + 1] * b[p + 1];
        l2 += a[p + 2] * b[p + 2];
        l3 += a[p + 3] * b[p + 3];
    }
    for p in 4 * chunks..k {
        l0 += a[p] * b[p];
    }
    (l0 + l1) + (l2 + l3)
}

/// Dense n-dimensional array, row-major, `f64` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Size {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Rank-1 tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::Size {
                    shape: vec![r, c],
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor {
            shape: vec![r, c],
            data,
        }
        .validate()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    fn validate(self) -> Result<Self, TensorError> {
        Ok(self)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element access for rank-2 tensors.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::Size {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Validation helper: errors if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<(), TensorError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                context: context.to_string(),
            });
        }
        Ok(())
    }

    // --- elementwise ---

    fn binary(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        if self.shape != rhs.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(rhs, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs)
    }

    /// Sign with the zero convention used by the rotation mask: zero weights
    /// count as positive, so the output is always in `{-1.0, +1.0}`.
    pub fn sign(&self) -> Tensor {
        self.map(|v| if v < 0.0 { -1.0 } else { 1.0 })
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    /// Elementwise `max(0, x)`.
    pub fn max0(&self) -> Tensor {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn add_scalar(&self, k: f64) -> Tensor {
        self.map(|v| v + k)
    }

    // --- reductions (fixed left-to-right order) ---

    fn require_nonempty(&self, op: &'static str) -> Result<(), TensorError> {
        if self.data.is_empty() {
            Err(TensorError::Empty { op })
        } else {
            Ok(())
        }
    }

    pub fn sum(&self) -> Result<f64, TensorError> {
        self.require_nonempty("sum")?;
        Ok(self.data.iter().sum())
    }

    pub fn mean(&self) -> Result<f64, TensorError> {
        self.require_nonempty("mean")?;
        Ok(self.data.iter().sum::<f64>() / self.data.len() as f64)
    }

    /// Population variance (divide by N).
    pub fn variance(&self) -> Result<f64, TensorError> {
        let m = self.mean()?;
        Ok(self.data.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64)
    }

    pub fn max_abs(&self) -> Result<f64, TensorError> {
        self.require_nonempty("max_abs")?;
        Ok(self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs())))
    }

    pub fn min_value(&self) -> Result<f64, TensorError> {
        self.require_nonempty("min_value")?;
        Ok(self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v)))
    }

    pub fn max_value(&self) -> Result<f64, TensorError> {
        self.require_nonempty("max_value")?;
        Ok(self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
    }

    // --- linear algebra ---

    fn require_rank2(&self, op: &'static str) -> Result<(), TensorError> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Standard matrix product. The accumulation runs over the inner index in
    /// ascending order, matching the naive triple loop exactly.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_rank2("matmul")?;
        rhs.require_rank2("matmul")?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += self.data[i * k + p] * rhs.data[p * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self * rhs^T` without materializing the transpose. Both operand rows
    /// are contiguous, which keeps the dense-layer hot path cache friendly.
    /// The dot product accumulates in four fixed interleaved lanes folded as
    /// `(l0 + l1) + (l2 + l3)` — a different but equally fixed order than
    /// [`Tensor::matmul`], still bit-reproducible run to run.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_rank2("matmul_nt")?;
        rhs.require_rank2("matmul_nt")?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, k2) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                out[i * n + j] = dot_lanes(a_row, b_row);
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self^T * rhs`, accumulated row-wise over `self`'s leading axis.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.require_rank2("matmul_tn")?;
        rhs.require_rank2("matmul_tn")?;
        let (b, m) = (self.shape[0], self.shape[1]);
        let (b2, n) = (rhs.shape[0], rhs.shape[1]);
        if b != b2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for row in 0..b {
            let a_row = &self.data[row * m..(row + 1) * m];
            let b_row = &rhs.data[row * n..(row + 1) * n];
            for i in 0..m {
                let a = a_row[i];
                let dst = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += a * b_row[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        self.require_rank2("transpose")?;
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
        )
        .unwrap()
    }

    /// Independent triple-loop oracle for matmul.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.at2(i, p) * b.at2(p, j);
                }
                out.data_mut()[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_case() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Tensor::identity(2);
        assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn matmul_row_by_column() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle_exactly() {
        let mut rng = SeededRng::new(5);
        let a = random_tensor(&mut rng, &[5, 7]);
        let b = random_tensor(&mut rng, &[7, 3]);
        let got = a.matmul(&b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert_eq!(g.to_bits(), w.to_bits());
        }
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = SeededRng::new(8);
        let a = random_tensor(&mut rng, &[4, 37]);
        let b = random_tensor(&mut rng, &[5, 37]);
        let via_nt = a.matmul_nt(&b).unwrap();
        let via_plain = a.matmul(&b.transpose().unwrap()).unwrap();
        for (x, y) in via_nt.data().iter().zip(via_plain.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let c = random_tensor(&mut rng, &[4, 3]);
        let via_tn = a.matmul_tn(&c).unwrap();
        let via_plain = a.transpose().unwrap().matmul(&c).unwrap();
        for (x, y) in via_tn.data().iter().zip(via_plain.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_nt_is_deterministic() {
        let mut rng = SeededRng::new(13);
        let a = random_tensor(&mut rng, &[3, 29]);
        let b = random_tensor(&mut rng, &[7, 29]);
        let x = a.matmul_nt(&b).unwrap();
        let y = a.matmul_nt(&b).unwrap();
        for (p, q) in x.data().iter().zip(y.data()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn elementwise_basics() {
        let t = Tensor::from_vec(vec![-2.0, 0.0, 3.0]);
        assert_eq!(t.abs().data(), &[2.0, 0.0, 3.0]);
        assert_eq!(t.sign().data(), &[-1.0, 1.0, 1.0]);
        let u = Tensor::from_vec(vec![0.5, -0.2]);
        assert_eq!(u.max0().data(), &[0.5, 0.0]);
    }

    #[test]
    fn reductions() {
        assert_eq!(
            Tensor::from_vec(vec![-1.5, -1.0]).max_abs().unwrap(),
            1.5
        );
        assert_eq!(Tensor::from_vec(vec![1.0, 1.0, 1.0]).variance().unwrap(), 0.0);
        assert_eq!(Tensor::from_vec(vec![1.0, 2.0, 3.0]).sum().unwrap(), 6.0);
    }

    #[test]
    fn empty_reduction_is_an_error() {
        let t = Tensor::from_vec(vec![]);
        assert!(matches!(t.sum(), Err(TensorError::Empty { .. })));
        assert!(matches!(t.max_abs(), Err(TensorError::Empty { .. })));
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut t = Tensor::zeros(&[2]);
        assert!(t.check_finite("ok").is_ok());
        t.data_mut()[1] = f64::NAN;
        assert!(t.check_finite("bad").is_err());
    }

    proptest! {
        #[test]
        fn add_commutes_bitwise(values in proptest::collection::vec(-1e6f64..1e6, 1..32)) {
            let a = Tensor::from_vec(values.clone());
            let b = Tensor::from_vec(values.iter().rev().cloned().collect());
            let ab = a.add(&b).unwrap();
            let ba = b.add(&a).unwrap();
            for (x, y) in ab.data().iter().zip(ba.data()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        #[test]
        fn sign_of_abs_is_all_ones(values in proptest::collection::vec(-1e3f64..1e3, 1..32)) {
            let t = Tensor::from_vec(values);
            for &v in t.abs().sign().data() {
                prop_assert_eq!(v, 1.0);
            }
        }

        #[test]
        fn variance_is_shift_invariant(
            values in proptest::collection::vec(-1e3f64..1e3, 2..32),
            shift in -1e3f64..1e3,
        ) {
            let t = Tensor::from_vec(values);
            let v0 = t.variance().unwrap();
            let v1 = t.add_scalar(shift).variance().unwrap();
            let scale = v0.abs().max(1.0);
            prop_assert!((v0 - v1).abs() <= 1e-12 * scale, "{} vs {}", v0, v1);
        }
    }
}
