//! Pointwise activation functions and their derivatives.

use crate::linalg::Matrix;

/// Activation kinds used by somata and dendritic branches.
///
/// `HardSigmoid` and `Tanh` are the somatic choices; `ReLU` is the branch
/// nonlinearity; `Identity` exists for the linear oracle nets and for the
/// dendritic-to-standard reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    HardSigmoid,
    Tanh,
    #[cfg_attr(feature = "serde", serde(rename = "relu"))]
    ReLU,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::HardSigmoid => {
                if x < 0.0 {
                    0.0
                } else if x > 1.0 {
                    1.0
                } else {
                    x
                }
            }
            Activation::Tanh => libm::tanh(x),
            Activation::ReLU => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    ///
    /// At the hard-sigmoid corners (x exactly 0 or 1) and at the ReLU kink
    /// the derivative is taken to be 0 (subgradient choice).
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::HardSigmoid => {
                if x > 0.0 && x < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Applies the activation elementwise, writing into `out`.
    pub fn apply_matrix(self, pre: &Matrix, out: &mut Matrix) {
        debug_assert_eq!(pre.shape(), out.shape());
        for (o, &p) in out.data_mut().iter_mut().zip(pre.data()) {
            *o = self.apply(p);
        }
    }

    /// Elementwise derivative at the given pre-activations, into `out`.
    pub fn derivative_matrix(self, pre: &Matrix, out: &mut Matrix) {
        debug_assert_eq!(pre.shape(), out.shape());
        for (o, &p) in out.data_mut().iter_mut().zip(pre.data()) {
            *o = self.derivative(p);
        }
    }

    /// Closed range of the activation's output, as (lo, hi).
    pub fn range(self) -> (f64, f64) {
        match self {
            Activation::HardSigmoid => (0.0, 1.0),
            Activation::Tanh => (-1.0, 1.0),
            Activation::ReLU => (0.0, f64::INFINITY),
            Activation::Identity => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_sigmoid_interior_is_identity() {
        assert_eq!(Activation::HardSigmoid.apply(0.5), 0.5);
    }

    #[test]
    fn hard_sigmoid_clamps() {
        assert_eq!(Activation::HardSigmoid.apply(2.0), 1.0);
        assert_eq!(Activation::HardSigmoid.apply(-0.3), 0.0);
    }

    #[test]
    fn relu_values() {
        assert_eq!(Activation::ReLU.apply(-1.0), 0.0);
        assert_eq!(Activation::ReLU.apply(0.7), 0.7);
    }

    #[test]
    fn hard_sigmoid_derivative_boundary_convention() {
        assert_eq!(Activation::HardSigmoid.derivative(0.0), 0.0);
        assert_eq!(Activation::HardSigmoid.derivative(1.0), 0.0);
        assert_eq!(Activation::HardSigmoid.derivative(0.5), 1.0);
        assert_eq!(Activation::HardSigmoid.derivative(-0.1), 0.0);
    }

    #[test]
    fn tanh_matches_libm() {
        let x = 0.37;
        assert_eq!(Activation::Tanh.apply(x), libm::tanh(x));
        let d = Activation::Tanh.derivative(x);
        let t = libm::tanh(x);
        assert!((d - (1.0 - t * t)).abs() < 1e-15);
    }
}
