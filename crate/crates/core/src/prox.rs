//! Closed-form proximal operators and Yosida (Moreau) smoothing for the
//! l1 norm. These are the building blocks of every discretization scheme
//! and of the Lasso solver.
//!
//! Scalar variants operate on one coordinate; the vector variants map them
//! coordinate-wise. All functions are pure.

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};
use ndarray::Array1;

/// Prox scale and Yosida smoothing parameter bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams<S> {
    pub alpha: S,
    pub epsilon: S,
}

impl<S: Real> SmoothingParams<S> {
    pub fn new(alpha: S, epsilon: S) -> Result<Self> {
        if alpha <= S::zero() {
            return Err(Error::InvalidParameter(format!(
                "prox scale alpha must be positive, got {alpha}"
            )));
        }
        if epsilon < S::zero() {
            return Err(Error::InvalidParameter(format!(
                "smoothing parameter epsilon must be nonnegative, got {epsilon}"
            )));
        }
        Ok(Self { alpha, epsilon })
    }
}

/// prox of `alpha * |.|` at one coordinate: soft thresholding.
///
/// Exact ties `|x| == alpha` fall through to the middle branch and map to
/// zero; all branches agree in value there, the choice only pins the
/// bit pattern.
#[inline]
pub fn soft_threshold_scalar<S: Real>(x: S, alpha: S) -> S {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        S::zero()
    }
}

/// Coordinate-wise soft thresholding of a vector.
pub fn soft_threshold<S: Real>(x: &Array1<S>, alpha: S) -> Array1<S> {
    x.mapv(|xi| soft_threshold_scalar(xi, alpha))
}

/// Yosida approximation of `|.|` at one coordinate (Huber shape).
#[inline]
pub fn yosida_value_scalar<S: Real>(x: S, epsilon: S) -> S {
    let ax = x.abs();
    if ax >= epsilon {
        ax - epsilon / cast(2.0)
    } else {
        ax * ax / (cast::<S>(2.0) * epsilon)
    }
}

/// Yosida approximation of the l1 norm: sum of the coordinate values.
pub fn yosida_value<S: Real>(x: &Array1<S>, epsilon: S) -> S {
    x.iter().map(|&xi| yosida_value_scalar(xi, epsilon)).sum()
}

/// Gradient of the Yosida approximation at one coordinate: clipped `x/eps`.
#[inline]
pub fn yosida_grad_scalar<S: Real>(x: S, epsilon: S) -> S {
    if x.abs() >= epsilon {
        x.signum()
    } else {
        x / epsilon
    }
}

/// Gradient of the Yosida approximation, coordinate-wise.
pub fn yosida_grad<S: Real>(x: &Array1<S>, epsilon: S) -> Array1<S> {
    x.mapv(|xi| yosida_grad_scalar(xi, epsilon))
}

/// prox of `alpha * phi_eps` at one coordinate, `phi_eps` being the Yosida
/// approximation of `|.|`.
#[inline]
pub fn prox_smoothed_scalar<S: Real>(x: S, alpha: S, epsilon: S) -> S {
    let edge = alpha + epsilon;
    if x > edge {
        x - alpha
    } else if x < -edge {
        x + alpha
    } else {
        epsilon * x / edge
    }
}

/// Coordinate-wise smoothed prox of a vector.
pub fn prox_smoothed<S: Real>(x: &Array1<S>, alpha: S, epsilon: S) -> Array1<S> {
    x.mapv(|xi| prox_smoothed_scalar(xi, alpha, epsilon))
}
