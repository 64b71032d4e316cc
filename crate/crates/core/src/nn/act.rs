//! Scalar activations and a stable softmax.
//!
//! Sigmoid branches on the sign of the argument and softmax subtracts the
//! row max, so neither overflows for inputs bounded by a few hundred.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActKind {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl ActKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActKind::Identity => x,
            ActKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActKind::Sigmoid => sigmoid(x),
            ActKind::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    ///
    /// Every kind here admits this form: identity 1, relu {0,1} (output is
    /// positive iff the input was), sigmoid y(1-y), tanh 1-y². Relu takes
    /// the zero subgradient at the kink.
    #[inline]
    pub fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            ActKind::Identity => 1.0,
            ActKind::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActKind::Sigmoid => y * (1.0 - y),
            ActKind::Tanh => 1.0 - y * y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction. Empty input yields an empty output.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(100.0).is_finite());
        assert!(sigmoid(-100.0).is_finite());
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-745.0) >= 0.0);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let xs = [100.0, 99.0, -100.0, 3.5];
        let p = softmax(&xs);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        let shifted: Vec<f64> = xs.iter().map(|x| x + 37.25).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_definitions() {
        let y = sigmoid(0.7);
        assert!((ActKind::Sigmoid.deriv_from_output(y) - y * (1.0 - y)).abs() < 1e-15);
        let t = 0.3f64.tanh();
        assert!((ActKind::Tanh.deriv_from_output(t) - (1.0 - t * t)).abs() < 1e-15);
        assert_eq!(ActKind::Relu.deriv_from_output(0.0), 0.0);
        assert_eq!(ActKind::Relu.deriv_from_output(2.0), 1.0);
    }
}
