//! Photonic transfer functions and their shifted variants.
//!
//! Two activation shapes are modeled, one per photonic hardware
//! configuration:
//!
//! * the photonic sigmoid `g(z) = A2 + (A1 - A2) / (1 + e^((z - z0)/d))`
//!   with constants fitted to a real device (`A1 = 0.060`, `A2 = 1.005`,
//!   `z0 = 0.145`, `d = 0.033`), range `[A1, A2]`;
//! * the photonic sinusoidal, a clamped `sin^2(pi/2 * z)` with range `[0, 1]`.
//!
//! Both are bounded and non-negative, which is what makes the non-negative
//! network transform possible. A transformed layer evaluates the shifted
//! variant `g_c(z) = g(z - c)` where `c` is the layer's activation shifting
//! point; `shift = 0` recovers the plain activation.

use serde::{Deserialize, Serialize};

pub const PHOTONIC_SIGMOID_A1: f64 = 0.060;
pub const PHOTONIC_SIGMOID_A2: f64 = 1.005;
pub const PHOTONIC_SIGMOID_Z0: f64 = 0.145;
pub const PHOTONIC_SIGMOID_D: f64 = 0.033;

/// Exponent clamp for the sigmoid; past this the asymptote is returned
/// exactly.
const SIGMOID_EXP_LIMIT: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    PhotonicSigmoid { a1: f64, a2: f64, z0: f64, d: f64 },
    PhotonicSinusoidal,
}

/// An activation kind plus its shifting point `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    #[serde(flatten)]
    pub kind: ActivationKind,
    /// Activation shifting point; non-negative, `0` for untransformed nets.
    pub shift: f64,
}

impl Activation {
    pub fn photonic_sigmoid() -> Self {
        Activation {
            kind: ActivationKind::PhotonicSigmoid {
                a1: PHOTONIC_SIGMOID_A1,
                a2: PHOTONIC_SIGMOID_A2,
                z0: PHOTONIC_SIGMOID_Z0,
                d: PHOTONIC_SIGMOID_D,
            },
            shift: 0.0,
        }
    }

    pub fn photonic_sinusoidal() -> Self {
        Activation {
            kind: ActivationKind::PhotonicSinusoidal,
            shift: 0.0,
        }
    }

    /// Same kind with the shifting point increased by `c`.
    pub fn shifted_by(&self, c: f64) -> Self {
        Activation {
            kind: self.kind,
            shift: self.shift + c,
        }
    }

    /// `(g_min, g_max)`; unaffected by the shift.
    pub fn range(&self) -> (f64, f64) {
        match self.kind {
            ActivationKind::PhotonicSigmoid { a1, a2, .. } => (a1, a2),
            ActivationKind::PhotonicSinusoidal => (0.0, 1.0),
        }
    }

    /// `g(z - shift)` for a single pre-activation value.
    pub fn apply(&self, z: f64) -> f64 {
        let s = z - self.shift;
        match self.kind {
            ActivationKind::PhotonicSigmoid { a1, a2, z0, d } => {
                let t = (s - z0) / d;
                if t > SIGMOID_EXP_LIMIT {
                    a2
                } else if t < -SIGMOID_EXP_LIMIT {
                    a1
                } else {
                    a2 + (a1 - a2) / (1.0 + t.exp())
                }
            }
            ActivationKind::PhotonicSinusoidal => {
                if s < 0.0 {
                    0.0
                } else if s > 1.0 {
                    1.0
                } else {
                    let v = (std::f64::consts::FRAC_PI_2 * s).sin();
                    v * v
                }
            }
        }
    }

    /// Analytic derivative of [`Activation::apply`] at `z`. At the sinusoidal
    /// kinks the flat-side value `0` is used; the inner one-sided derivative
    /// is `0` there as well since `sin(0) = sin(pi) = 0`.
    pub fn grad(&self, z: f64) -> f64 {
        let s = z - self.shift;
        match self.kind {
            ActivationKind::PhotonicSigmoid { a1, a2, z0, d } => {
                let t = (s - z0) / d;
                if t.abs() > SIGMOID_EXP_LIMIT {
                    0.0
                } else {
                    let e = t.exp();
                    let denom = 1.0 + e;
                    (a2 - a1) * e / (d * denom * denom)
                }
            }
            ActivationKind::PhotonicSinusoidal => {
                if s <= 0.0 || s >= 1.0 {
                    0.0
                } else {
                    std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * s).sin()
                }
            }
        }
    }

    pub fn apply_tensor(&self, z: &crate::tensor::Tensor) -> crate::tensor::Tensor {
        z.map(|v| self.apply(v))
    }

    pub fn grad_tensor(&self, z: &crate::tensor::Tensor) -> crate::tensor::Tensor {
        z.map(|v| self.grad(v))
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ActivationKind::PhotonicSigmoid { .. } => "photonic_sigmoid",
            ActivationKind::PhotonicSinusoidal => "photonic_sinusoidal",
        }
    }
}
