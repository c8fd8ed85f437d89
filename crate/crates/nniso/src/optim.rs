//! Parameter-update rules and initialization schemes.
//!
//! Every rule implements [`UpdateRule`] and is registered by name in
//! [`OptimizerRegistry`], so the CLI and the training scenarios can select
//! one at runtime:
//!
//! * `sgd` — plain `theta - eta * grad`;
//! * `csgd` — clipping SGD, `max(0, theta - eta_nn * grad)`, the baseline
//!   non-negative rule;
//! * `nnsgd` — the sign-preserving multiplicative rule
//!   `theta + |theta| * tanh(-eta_in * grad) * eta_out`. Because
//!   `|tanh| < 1` and `eta_out <= 1`, the step magnitude is strictly below
//!   `|theta|`: strictly positive entries stay strictly positive and zero
//!   entries are fixed points.

use crate::rng::SeededRng;
use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("unknown optimizer rule '{0}'")]
    UnknownRule(String),
    #[error("{rule}: rate {rate} must satisfy {constraint}, got {value}")]
    InvalidRate {
        rule: &'static str,
        rate: &'static str,
        constraint: &'static str,
        value: f64,
    },
    #[error("{rule}: missing required rate {rate}")]
    MissingRate {
        rule: &'static str,
        rate: &'static str,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A parameter-update strategy applied tensor by tensor.
pub trait UpdateRule: Send + Sync {
    fn name(&self) -> &'static str;

    /// In-place `theta <- step(theta, grad)`.
    fn update(&self, theta: &mut Tensor, grad: &Tensor) -> Result<(), OptimError>;

    /// True when parameters that start `>= 0` remain `>= 0` under this rule.
    fn preserves_nonnegativity(&self) -> bool;
}

fn check_shapes(theta: &Tensor, grad: &Tensor) -> Result<(), OptimError> {
    if theta.shape() != grad.shape() {
        return Err(OptimError::Tensor(TensorError::ShapeMismatch {
            op: "optimizer update",
            left: theta.shape().to_vec(),
            right: grad.shape().to_vec(),
        }));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub eta: f64,
}

impl Sgd {
    pub fn new(eta: f64) -> Result<Self, OptimError> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(OptimError::InvalidRate {
                rule: "sgd",
                rate: "eta",
                constraint: "> 0",
                value: eta,
            });
        }
        Ok(Sgd { eta })
    }
}

impl UpdateRule for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn update(&self, theta: &mut Tensor, grad: &Tensor) -> Result<(), OptimError> {
        check_shapes(theta, grad)?;
        let eta = self.eta;
        for (t, g) in theta.data_mut().iter_mut().zip(grad.data()) {
            *t -= eta * g;
        }
        Ok(())
    }

    fn preserves_nonnegativity(&self) -> bool {
        false
    }
}

/// Clipping SGD: parameters are projected back onto `>= 0` after each step.
#[derive(Debug, Clone)]
pub struct Csgd {
    pub eta_nn: f64,
}

impl Csgd {
    pub fn new(eta_nn: f64) -> Result<Self, OptimError> {
        if !(eta_nn > 0.0) || !eta_nn.is_finite() {
            return Err(OptimError::InvalidRate {
                rule: "csgd",
                rate: "eta_nn",
                constraint: "> 0",
                value: eta_nn,
            });
        }
        Ok(Csgd { eta_nn })
    }
}

impl UpdateRule for Csgd {
    fn name(&self) -> &'static str {
        "csgd"
    }

    fn update(&self, theta: &mut Tensor, grad: &Tensor) -> Result<(), OptimError> {
        check_shapes(theta, grad)?;
        let eta = self.eta_nn;
        for (t, g) in theta.data_mut().iter_mut().zip(grad.data()) {
            *t = (*t - eta * g).max(0.0);
        }
        Ok(())
    }

    fn preserves_nonnegativity(&self) -> bool {
        true
    }
}

/// The multiplicative sign-preserving rule with inner rate `eta_in` (scales
/// gradients into tanh's working range) and outer rate `eta_out in (0, 1]`
/// (step size).
#[derive(Debug, Clone)]
pub struct Nnsgd {
    pub eta_in: f64,
    pub eta_out: f64,
}

impl Nnsgd {
    pub fn new(eta_in: f64, eta_out: f64) -> Result<Self, OptimError> {
        if !(eta_in > 0.0) || !eta_in.is_finite() {
            return Err(OptimError::InvalidRate {
                rule: "nnsgd",
                rate: "eta_in",
                constraint: "> 0",
                value: eta_in,
            });
        }
        if !(eta_out > 0.0 && eta_out <= 1.0) {
            return Err(OptimError::InvalidRate {
                rule: "nnsgd",
                rate: "eta_out",
                constraint: "in (0, 1]",
                value: eta_out,
            });
        }
        Ok(Nnsgd { eta_in, eta_out })
    }
}

impl UpdateRule for Nnsgd {
    fn name(&self) -> &'static str {
        "nnsgd"
    }

    fn update(&self, theta: &mut Tensor, grad: &Tensor) -> Result<(), OptimError> {
        check_shapes(theta, grad)?;
        let (ei, eo) = (self.eta_in, self.eta_out);
        for (t, g) in theta.data_mut().iter_mut().zip(grad.data()) {
            *t += t.abs() * (-ei * g).tanh() * eo;
        }
        Ok(())
    }

    fn preserves_nonnegativity(&self) -> bool {
        true
    }
}

// Pure single-tensor forms of the three rules; the trait impls above are the
// in-place equivalents used by the training loop.

pub fn step_sgd(theta: &Tensor, grad: &Tensor, eta: f64) -> Result<Tensor, OptimError> {
    let mut out = theta.clone();
    Sgd::new(eta)?.update(&mut out, grad)?;
    Ok(out)
}

pub fn step_csgd(theta: &Tensor, grad: &Tensor, eta_nn: f64) -> Result<Tensor, OptimError> {
    let mut out = theta.clone();
    Csgd::new(eta_nn)?.update(&mut out, grad)?;
    Ok(out)
}

pub fn step_nnsgd(
    theta: &Tensor,
    grad: &Tensor,
    eta_in: f64,
    eta_out: f64,
) -> Result<Tensor, OptimError> {
    let mut out = theta.clone();
    Nnsgd::new(eta_in, eta_out)?.update(&mut out, grad)?;
    Ok(out)
}

/// Learning rates supplied by the caller; each rule picks what it needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RateConfig {
    pub eta: Option<f64>,
    pub eta_nn: Option<f64>,
    pub eta_in: Option<f64>,
    pub eta_out: Option<f64>,
}

fn require(
    value: Option<f64>,
    rule: &'static str,
    rate: &'static str,
) -> Result<f64, OptimError> {
    value.ok_or(OptimError::MissingRate { rule, rate })
}

type Factory = fn(&RateConfig) -> Result<Box<dyn UpdateRule>, OptimError>;

/// Name-indexed factory for update rules.
pub struct OptimizerRegistry {
    entries: Vec<(&'static str, Factory)>,
}

impl OptimizerRegistry {
    /// Registry with the three built-in rules.
    pub fn with_builtins() -> Self {
        let mut reg = OptimizerRegistry {
            entries: Vec::new(),
        };
        reg.register("sgd", |rates| {
            Ok(Box::new(Sgd::new(require(rates.eta, "sgd", "eta")?)?))
        });
        reg.register("csgd", |rates| {
            Ok(Box::new(Csgd::new(require(
                rates.eta_nn,
                "csgd",
                "eta_nn",
            )?)?))
        });
        reg.register("nnsgd", |rates| {
            Ok(Box::new(Nnsgd::new(
                require(rates.eta_in, "nnsgd", "eta_in")?,
                require(rates.eta_out, "nnsgd", "eta_out")?,
            )?))
        });
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
    }

    pub fn create(
        &self,
        name: &str,
        rates: &RateConfig,
    ) -> Result<Box<dyn UpdateRule>, OptimError> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| f(rates))
            .unwrap_or_else(|| Err(OptimError::UnknownRule(name.to_string())))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}

// --- initialization schemes ---

/// Inverse-CDF exponential sample from a uniform `u in (0, 1)`. The absolute
/// value keeps the draw positive for either sign convention of `ln(u)`.
pub fn exponential_from_uniform(u: f64, lambda: f64) -> f64 {
    u.ln().abs() / lambda
}

/// Strictly positive entries from an exponential distribution with rate
/// `lambda` (mean `1/lambda`).
pub fn init_exponential(shape: &[usize], lambda: f64, rng: &mut SeededRng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| exponential_from_uniform(rng.uniform_open(), lambda))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree")
}

/// Kaiming-uniform entries `U(-k, k)` with `k = sqrt(1/fan_in)`.
pub fn init_kaiming(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sgd_basic_steps() {
        let theta = Tensor::from_vec(vec![1.0]);
        let new = step_sgd(&theta, &Tensor::from_vec(vec![0.5]), 0.1).unwrap();
        assert!((new.data()[0] - 0.95).abs() < 1e-15);
        let same = step_sgd(&theta, &Tensor::from_vec(vec![0.0]), 0.1).unwrap();
        assert_eq!(same.data()[0], 1.0);
    }

    #[test]
    fn sgd_matches_scalar_oracle() {
        let mut rng = SeededRng::new(4);
        for _ in 0..100 {
            let t = rng.uniform_range(-5.0, 5.0);
            let g = rng.uniform_range(-5.0, 5.0);
            let eta = rng.uniform_range(1e-4, 1.0);
            let got = step_sgd(&Tensor::from_vec(vec![t]), &Tensor::from_vec(vec![g]), eta)
                .unwrap();
            assert_eq!(got.data()[0].to_bits(), (t - eta * g).to_bits());
        }
    }

    #[test]
    fn csgd_clips_at_zero() {
        let cases = [
            (0.5, 1.0, 1.0, 0.0),
            (0.5, -1.0, 0.1, 0.6),
            (0.0, -2.0, 0.1, 0.2),
        ];
        for (t, g, eta, want) in cases {
            let got =
                step_csgd(&Tensor::from_vec(vec![t]), &Tensor::from_vec(vec![g]), eta).unwrap();
            assert!((got.data()[0] - want).abs() < 1e-15, "{t} {g} {eta}");
        }
    }

    #[test]
    fn nnsgd_worked_example() {
        let got = step_nnsgd(
            &Tensor::from_vec(vec![0.5]),
            &Tensor::from_vec(vec![-1.0]),
            1.0,
            0.5,
        )
        .unwrap();
        let want = 0.5 + 0.5 * 1.0_f64.tanh() * 0.5;
        assert_eq!(got.data()[0].to_bits(), want.to_bits());
        assert!((got.data()[0] - 0.690399).abs() < 1e-6);
    }

    #[test]
    fn nnsgd_zero_is_absorbing_and_zero_grad_is_noop() {
        let zero = step_nnsgd(
            &Tensor::from_vec(vec![0.0]),
            &Tensor::from_vec(vec![123.0]),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(zero.data()[0], 0.0);
        let same = step_nnsgd(
            &Tensor::from_vec(vec![0.7]),
            &Tensor::from_vec(vec![0.0]),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(same.data()[0], 0.7);
    }

    #[test]
    fn nnsgd_rejects_bad_outer_rate() {
        assert!(Nnsgd::new(1.0, 0.0).is_err());
        assert!(Nnsgd::new(1.0, 1.5).is_err());
        assert!(Nnsgd::new(-1.0, 0.5).is_err());
        assert!(Nnsgd::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn registry_resolves_rules_by_name() {
        let reg = OptimizerRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["sgd", "csgd", "nnsgd"]);
        let rates = RateConfig {
            eta: Some(0.1),
            eta_nn: Some(0.01),
            eta_in: Some(0.78),
            eta_out: Some(0.23),
        };
        for name in ["sgd", "csgd", "nnsgd"] {
            let rule = reg.create(name, &rates).unwrap();
            assert_eq!(rule.name(), name);
        }
        assert!(matches!(
            reg.create("adam", &rates),
            Err(OptimError::UnknownRule(_))
        ));
        assert!(matches!(
            reg.create("nnsgd", &RateConfig::default()),
            Err(OptimError::MissingRate { .. })
        ));
    }

    #[test]
    fn exponential_fixed_point() {
        let t = exponential_from_uniform((-1.0_f64).exp(), 100.0);
        assert!((t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn exponential_mean_and_positivity() {
        let mut rng = SeededRng::new(9);
        let t = init_exponential(&[100_000], 100.0, &mut rng);
        assert!(t.min_value().unwrap() > 0.0);
        let mean = t.mean().unwrap();
        assert!((mean - 0.01).abs() < 0.01 * 0.05, "mean {mean}");
    }

    #[test]
    fn kaiming_bounds_and_variance() {
        let mut rng = SeededRng::new(10);
        let t = init_kaiming(&[100_000], 4, &mut rng);
        assert!(t.max_abs().unwrap() < 0.5);
        let var = t.variance().unwrap();
        let want = 0.25 / 3.0;
        assert!((var - want).abs() < want * 0.05, "var {var}");

        let mut a = SeededRng::new(3);
        let mut b = SeededRng::new(3);
        assert_eq!(
            init_kaiming(&[32], 8, &mut a).data(),
            init_kaiming(&[32], 8, &mut b).data()
        );
    }

    proptest! {
        #[test]
        fn nnsgd_preserves_strict_positivity(
            theta in 1e-12f64..1e3,
            grad in -1e6f64..1e6,
            eta_in in 1e-3f64..10.0,
            eta_out in 1e-3f64..1.0,
        ) {
            let out = step_nnsgd(
                &Tensor::from_vec(vec![theta]),
                &Tensor::from_vec(vec![grad]),
                eta_in,
                eta_out,
            ).unwrap();
            let v = out.data()[0];
            prop_assert!(v > 0.0, "theta {theta} grad {grad} -> {v}");
            prop_assert!((v - theta).abs() < theta, "step must stay below |theta|");
        }

        #[test]
        fn csgd_output_never_negative(
            theta in -1e3f64..1e3,
            grad in -1e3f64..1e3,
            eta in 1e-4f64..1.0,
        ) {
            let out = step_csgd(
                &Tensor::from_vec(vec![theta]),
                &Tensor::from_vec(vec![grad]),
                eta,
            ).unwrap();
            prop_assert!(out.data()[0] >= 0.0);
        }

        #[test]
        fn nnsgd_step_bounded_by_outer_rate(
            theta in -1e3f64..1e3,
            grad in -1e6f64..1e6,
            eta_out in 1e-6f64..1.0,
        ) {
            let out = step_nnsgd(
                &Tensor::from_vec(vec![theta]),
                &Tensor::from_vec(vec![grad]),
                1.0,
                eta_out,
            ).unwrap();
            // half-ulp slack: theta + delta rounds once
            let bound = eta_out * theta.abs() + theta.abs() * f64::EPSILON;
            prop_assert!((out.data()[0] - theta).abs() <= bound);
        }

        #[test]
        fn nnsgd_monotone_in_gradient(
            theta in 1e-6f64..1e3,
            g1 in -10.0f64..10.0,
            g2 in -10.0f64..10.0,
        ) {
            let step = |g: f64| {
                step_nnsgd(
                    &Tensor::from_vec(vec![theta]),
                    &Tensor::from_vec(vec![g]),
                    1.0,
                    0.5,
                ).unwrap().data()[0]
            };
            let (lo, hi) = (g1.min(g2), g1.max(g2));
            prop_assert!(step(lo) >= step(hi));
        }
    }
}
