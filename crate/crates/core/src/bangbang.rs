//! Exact transition density of the 1-D bang-bang Brownian motion
//! `dx = -lambda sgn(x) dt + dw`, together with a cached-CDF oracle and a
//! Kolmogorov-Smirnov distance. This is the ground truth against which the
//! schemes and the MCMC stack are validated in one dimension.

use crate::error::{Error, Result};
use crate::prox::soft_threshold_scalar;
use crate::quad;
use crate::scalar::{cast, Real};
use crate::schemes::LevelGrid;
use rand::Rng;

/// Drift magnitude, elapsed time and start point of the diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BangBangParams<S> {
    pub lambda: S,
    pub t: S,
    pub x0: S,
}

impl<S: Real> BangBangParams<S> {
    pub fn new(lambda: S, t: S, x0: S) -> Result<Self> {
        if !(lambda > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "drift magnitude must be positive, got {lambda}"
            )));
        }
        if !(t > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "elapsed time must be positive, got {t}"
            )));
        }
        Ok(Self { lambda, t, x0 })
    }
}

/// Standard normal CDF.
pub fn normal_cdf<S: Real>(x: S) -> S {
    let sqrt2 = cast::<S>(std::f64::consts::SQRT_2);
    cast::<S>(0.5) * (-x / sqrt2).erfc()
}

/// Transition density `p(x, t | x0)` of the bang-bang diffusion.
///
/// The Gaussian factor and its exponential prefactors are combined into a
/// single exponent before exponentiating, so large `lambda sqrt(t)` cannot
/// overflow (the combined exponent is never positive).
pub fn transition_density<S: Real>(params: &BangBangParams<S>, x: S) -> S {
    let two = cast::<S>(2.0);
    let lambda = params.lambda;
    let t = params.t;
    let ax = x.abs();
    let ax0 = params.x0.abs();
    let u = x - params.x0;
    // log of exp(lambda(|x0|+|x|) - t lambda^2/2) gamma_t(x - x0) e^{-2 lambda |x|}
    let exponent = lambda * ax0 - lambda * ax - t * lambda * lambda / two - u * u / (two * t);
    let gauss_part = exponent.exp() / (two * cast::<S>(std::f64::consts::PI) * t).sqrt();
    let arg = (lambda * t - (ax + ax0)) / t.sqrt();
    let cdf_part = normal_cdf(arg) * (-two * lambda * ax).exp();
    lambda * (gauss_part + cdf_part)
}

/// Invariant density `lambda exp(-2 lambda |x|)`.
pub fn stationary_density<S: Real>(lambda: S, x: S) -> S {
    lambda * (-cast::<S>(2.0) * lambda * x.abs()).exp()
}

/// CDF of the transition density, precomputed on a grid over the window
/// `[-40/lambda, 40/lambda]` (the tails decay like `exp(-2 lambda |x|)`,
/// so the truncated mass is far below any tolerance used here).
#[derive(Debug, Clone)]
pub struct TransitionCdf<S> {
    params: BangBangParams<S>,
    nodes: Vec<S>,
    cum: Vec<S>,
}

impl<S: Real> TransitionCdf<S> {
    const CELLS: usize = 2000;

    pub fn new(params: BangBangParams<S>) -> Self {
        let half_width = cast::<S>(40.0) / params.lambda;
        let (lo, hi) = (-half_width, half_width);
        let n = Self::CELLS;
        let mut nodes: Vec<S> = (0..=n)
            .map(|i| {
                lo + (hi - lo) * S::from_usize(i).unwrap() / S::from_usize(n).unwrap()
            })
            .collect();
        // Make the density kinks exact grid nodes.
        for kink in [S::zero(), params.x0] {
            if kink > lo && kink < hi && !nodes.contains(&kink) {
                nodes.push(kink);
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let f = |x: S| transition_density(&params, x);
        let cell_tol = cast::<S>(1e-10) / S::from_usize(nodes.len()).unwrap();
        let mut cum = Vec::with_capacity(nodes.len());
        cum.push(S::zero());
        let mut acc = S::zero();
        for w in nodes.windows(2) {
            acc += quad::integrate(&f, w[0], w[1], cell_tol);
            cum.push(acc);
        }
        Self { params, nodes, cum }
    }

    pub fn window(&self) -> (S, S) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// CDF value at `x`: cached cumulative mass up to the enclosing node
    /// plus a two-panel Simpson correction for the partial cell.
    pub fn eval(&self, x: S) -> S {
        if x <= self.nodes[0] {
            return S::zero();
        }
        if x >= *self.nodes.last().unwrap() {
            return *self.cum.last().unwrap();
        }
        let idx = match self
            .nodes
            .binary_search_by(|n| n.partial_cmp(&x).unwrap())
        {
            Ok(i) => return self.cum[i],
            Err(i) => i - 1,
        };
        let a = self.nodes[idx];
        let f = |t: S| transition_density(&self.params, t);
        let two = cast::<S>(2.0);
        let six = cast::<S>(6.0);
        let m = (a + x) / two;
        let left = (m - a) / six * (f(a) + cast::<S>(4.0) * f((a + m) / two) + f(m));
        let right = (x - m) / six * (f(m) + cast::<S>(4.0) * f((m + x) / two) + f(x));
        self.cum[idx] + left + right
    }

    /// Inverse CDF by bisection on the cached grid; used to draw oracle
    /// samples in goodness-of-fit tests.
    pub fn inverse(&self, u: S) -> S {
        let total = *self.cum.last().unwrap();
        let target = u * total;
        let (mut lo, mut hi) = self.window();
        for _ in 0..200 {
            let mid = (lo + hi) / cast::<S>(2.0);
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= cast::<S>(1e-13) * (S::one() + mid.abs()) {
                break;
            }
        }
        (lo + hi) / cast::<S>(2.0)
    }
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and
/// the oracle CDF.
pub fn ks_distance<S: Real>(samples: &[S], cdf: impl Fn(S) -> S) -> Result<S> {
    const MIN_SAMPLES: usize = 100;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = S::from_usize(sorted.len()).unwrap();
    let mut sup = S::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let fx = cdf(x);
        let below = S::from_usize(i).unwrap() / n;
        let above = S::from_usize(i + 1).unwrap() / n;
        sup = sup.max((fx - below).abs()).max((above - fx).abs());
    }
    Ok(sup)
}

/// Endpoint of one SIES path of `dx = -lambda sgn(x) dt + dw`: the
/// one-dimensional scheme with the prox scaled by `lambda`. Used by the
/// CLI stress test where `lambda` is free; at `lambda = 1` it coincides
/// with the full scheme on the `A = 0` problem.
pub fn sies_endpoint_1d<S: Real, R: Rng>(
    lambda: S,
    grid: &LevelGrid<S>,
    x0: S,
    rng: &mut R,
) -> S {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let alpha = lambda * dt;
    let mut x = x0;
    for _ in 0..grid.steps() {
        let n: S = S::standard_normal(rng);
        x = soft_threshold_scalar(x + sqrt_dt * n, alpha);
    }
    x
}
