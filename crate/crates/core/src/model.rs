//! The regression problem: objective, posterior density, problem
//! generation, a proximal-gradient Lasso solver used as an internal oracle,
//! and the KKT certificate machinery.

use crate::error::{Error, Result};
use crate::prox::soft_threshold;
use crate::rng::substream;
use crate::scalar::{cast, Real};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Classification tolerance for membership in the interior set vs the
/// boundary set of the KKT certificate.
pub const KKT_CLASSIFICATION_TOL: f64 = 1e-8;

/// The linear regression problem `y = A x + noise` together with the
/// inverse temperature of the posterior. Immutable after construction and
/// safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<S> {
    a: Array2<S>,
    y: Array1<S>,
    beta: S,
}

/// The three components of the objective `F(x) = |x|_1 + |Ax - y|^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue<S> {
    pub l1: S,
    pub quad: S,
    pub total: S,
}

/// Optimality certificate at a point: the correlation vector
/// `xi = A^T (y - A x)`, the index sets it induces and the worst violation
/// of the subgradient condition `xi in sgn(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate<S> {
    pub xi: Array1<S>,
    /// Indices with `|xi_i| < 1 - tol` (interior set).
    pub set_i: Vec<usize>,
    /// Indices with `|xi_i| >= 1 - tol` (boundary set).
    pub boundary: Vec<usize>,
    /// Indices with `x_i != 0`.
    pub support: Vec<usize>,
    pub residual: S,
}

impl<S: Real> ProblemInstance<S> {
    pub fn new(a: Array2<S>, y: Array1<S>, beta: S) -> Result<Self> {
        let (n, p) = a.dim();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(format!(
                "design matrix must be nonempty, got {n} x {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if !(beta > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "inverse temperature beta must be positive, got {beta}"
            )));
        }
        Ok(Self { a, y, beta })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn design(&self) -> &Array2<S> {
        &self.a
    }

    pub fn observations(&self) -> &Array1<S> {
        &self.y
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    /// Same problem at a different inverse temperature.
    pub fn with_beta(&self, beta: S) -> Result<Self> {
        Self::new(self.a.clone(), self.y.clone(), beta)
    }

    fn check_len(&self, x: &Array1<S>) -> Result<()> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Gradient of the quadratic part, `A^T (A x - y)`. The drift of the
    /// diffusion and the KKT vector `xi` are both `-grad_quad`.
    pub fn grad_quad(&self, x: &Array1<S>) -> Array1<S> {
        let r = self.a.dot(x) - &self.y;
        self.a.t().dot(&r)
    }

    /// `F(x)` split into its l1, quadratic and total parts.
    pub fn objective(&self, x: &Array1<S>) -> Result<ObjectiveValue<S>> {
        self.check_len(x)?;
        Ok(self.objective_unchecked(x))
    }

    fn objective_unchecked(&self, x: &Array1<S>) -> ObjectiveValue<S> {
        let l1 = x.iter().map(|v| v.abs()).sum();
        let r = self.a.dot(x) - &self.y;
        let quad = r.dot(&r) / cast::<S>(2.0);
        ObjectiveValue {
            l1,
            quad,
            total: l1 + quad,
        }
    }

    /// Log of the unnormalized posterior, `-2 beta F(x)`. Shares the
    /// arithmetic path with [`Self::objective`] by construction.
    pub fn log_posterior_unnorm(&self, x: &Array1<S>) -> Result<S> {
        self.check_len(x)?;
        Ok(self.log_posterior_unchecked(x))
    }

    pub(crate) fn log_posterior_unchecked(&self, x: &Array1<S>) -> S {
        -cast::<S>(2.0) * self.beta * self.objective_unchecked(x).total
    }

    /// Largest eigenvalue of `A^T A` by a fixed 100-iteration power method,
    /// started from a fixed pseudo-random direction.
    fn spectral_norm_ata(&self) -> S {
        let p = self.p();
        let mut rng = substream(0x5eed, "power-method", 0, 0);
        let mut v = Array1::from_shape_fn(p, |_| S::standard_normal(&mut rng));
        let norm0 = v.dot(&v).sqrt();
        v.mapv_inplace(|t| t / norm0);
        let mut lambda = S::zero();
        for _ in 0..100 {
            let w = self.a.t().dot(&self.a.dot(&v));
            let norm = w.dot(&w).sqrt();
            if norm == S::zero() {
                return S::zero();
            }
            lambda = v.dot(&w);
            v = w.mapv(|t| t / norm);
        }
        lambda
    }

    /// Minimize `F` by proximal-gradient descent (ISTA) with step
    /// `1 / |A^T A|_2`, started at zero. Returns the iterate once the KKT
    /// residual drops below `tol`.
    pub fn lasso_solve(&self, tol: S, max_iter: usize) -> Result<Array1<S>> {
        if !(tol > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance must be positive, got {tol}"
            )));
        }
        let lipschitz = self.spectral_norm_ata();
        let step = if lipschitz > S::zero() {
            S::one() / lipschitz
        } else {
            S::one()
        };
        let mut x = Array1::zeros(self.p());
        let mut residual = S::infinity();
        for _ in 0..max_iter {
            let xi = -self.grad_quad(&x);
            residual = kkt_residual(&x, &xi);
            if residual <= tol {
                return Ok(x);
            }
            x = soft_threshold(&(&x + &xi.mapv(|v| v * step)), step);
        }
        // One last residual check: the final prox step may have converged.
        let xi = -self.grad_quad(&x);
        residual = residual.min(kkt_residual(&x, &xi));
        if residual <= tol {
            return Ok(x);
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: residual.to_f64().unwrap_or(f64::NAN),
        })
    }

    /// Evaluate the KKT certificate at `x`.
    pub fn kkt_check(&self, x: &Array1<S>) -> Result<KktCertificate<S>> {
        self.check_len(x)?;
        let xi = -self.grad_quad(x);
        let residual = kkt_residual(x, &xi);
        let tol = cast::<S>(KKT_CLASSIFICATION_TOL);
        let threshold = S::one() - tol;
        let mut set_i = Vec::new();
        let mut boundary = Vec::new();
        let mut support = Vec::new();
        for i in 0..x.len() {
            if xi[i].abs() < threshold {
                set_i.push(i);
            } else {
                boundary.push(i);
            }
            if x[i] != S::zero() {
                support.push(i);
            }
        }
        Ok(KktCertificate {
            xi,
            set_i,
            boundary,
            support,
            residual,
        })
    }

    /// Two routes to the optimality gap `F(x) - F(x_star)`:
    /// directly, and through the decomposition
    /// `sum_i |x_i| (1 - sgn(x_i) xi_i) + |A (x - x_star)|^2 / 2`
    /// with `xi` evaluated at `x_star`. Zero coordinates contribute nothing
    /// to the first sum.
    ///
    /// The two agree up to roughly `|x_star|_1` times the KKT residual of
    /// `x_star`, so a tightly solved minimizer is needed for tight
    /// agreement.
    pub fn objective_gap_decomposition(
        &self,
        x: &Array1<S>,
        x_star: &Array1<S>,
    ) -> Result<(S, S)> {
        self.check_len(x)?;
        self.check_len(x_star)?;
        let cert = self.kkt_check(x_star)?;
        if cert.residual > cast(1e-6) {
            return Err(Error::InvalidParameter(format!(
                "x_star is not a minimizer: KKT residual {:.3e} > 1e-6",
                cert.residual.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let gap_direct =
            self.objective_unchecked(x).total - self.objective_unchecked(x_star).total;
        let mut l1_term = S::zero();
        for i in 0..x.len() {
            if x[i] != S::zero() {
                l1_term += x[i].abs() * (S::one() - x[i].signum() * cert.xi[i]);
            }
        }
        let diff = x - x_star;
        let image = self.a.dot(&diff);
        let gap_formula = l1_term + image.dot(&image) / cast::<S>(2.0);
        Ok((gap_direct, gap_formula))
    }
}

/// Worst violation of `xi in sgn(x)`:
/// `max( max_i (|xi_i| - 1)_+ , max_{i: x_i != 0} |xi_i - sgn(x_i)| )`.
fn kkt_residual<S: Real>(x: &Array1<S>, xi: &Array1<S>) -> S {
    let mut worst = S::zero();
    for i in 0..x.len() {
        let overshoot = (xi[i].abs() - S::one()).max(S::zero());
        worst = worst.max(overshoot);
        if x[i] != S::zero() {
            worst = worst.max((xi[i] - x[i].signum()).abs());
        }
    }
    worst
}

/// Draw a Laplace variate with rate 2 (density proportional to
/// `exp(-2|t|)`) by inverse CDF.
fn laplace_rate2<S: Real>(rng: &mut impl rand::Rng) -> S {
    let u: S = S::open_unit(rng);
    let half = cast::<S>(0.5);
    let centered = u - half;
    -centered.signum() * (S::one() - cast::<S>(2.0) * centered.abs()).ln() / cast::<S>(2.0)
}

/// Generate the benchmark problem: `A` has independent entries
/// `+-1/sqrt(n)`, the true signal has i.i.d. Laplace(rate 2) coordinates,
/// and `y = A x_true + w` with `w ~ N(0, I/2)`. Pure function of
/// `(p, n, seed)`; the inverse temperature defaults to 1.
pub fn generate_problem<S: Real>(
    p: usize,
    n: usize,
    seed: u64,
) -> Result<(ProblemInstance<S>, Array1<S>)> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "dimensions must be positive, got p={p}, n={n}"
        )));
    }
    let mut rng = substream(seed, "problem", 0, 0);
    let scale = S::one() / S::from_usize(n).unwrap().sqrt();
    // Draw order is part of the reproducibility contract:
    // A row-major, then x_true, then the noise.
    let a = Array2::from_shape_fn((n, p), |_| {
        if rng.random::<bool>() {
            scale
        } else {
            -scale
        }
    });
    let x_true = Array1::from_shape_fn(p, |_| laplace_rate2::<S>(&mut rng));
    let noise_sd = cast::<S>(0.5).sqrt();
    let w = Array1::from_shape_fn(n, |_| S::standard_normal(&mut rng) * noise_sd);
    let y = a.dot(&x_true) + &w;
    let inst = ProblemInstance::new(a, y, S::one())?;
    Ok((inst, x_true))
}

/// On-disk form of a generated problem. Floats are written with 17
/// significant digits so the document round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub p: usize,
    pub n: usize,
    pub beta: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub x_true: Vec<f64>,
    pub seed: u64,
}

impl ProblemDocument {
    pub fn from_parts<S: Real>(inst: &ProblemInstance<S>, x_true: &Array1<S>, seed: u64) -> Self {
        let to64 = |v: S| v.to_f64().expect("scalar convertible to f64");
        Self {
            p: inst.p(),
            n: inst.n(),
            beta: to64(inst.beta()),
            a: inst
                .design()
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&v| to64(v)).collect())
                .collect(),
            y: inst.observations().iter().map(|&v| to64(v)).collect(),
            x_true: x_true.iter().map(|&v| to64(v)).collect(),
            seed,
        }
    }

    pub fn into_parts<S: Real>(&self) -> Result<(ProblemInstance<S>, Array1<S>)> {
        let from64 = |v: f64| {
            S::from_f64(v).ok_or_else(|| {
                Error::MalformedDocument(format!("value {v} not representable in scalar type"))
            })
        };
        if self.a.len() != self.n || self.a.iter().any(|row| row.len() != self.p) {
            return Err(Error::MalformedDocument(format!(
                "matrix shape does not match p={}, n={}",
                self.p, self.n
            )));
        }
        if self.y.len() != self.n || self.x_true.len() != self.p {
            return Err(Error::MalformedDocument(
                "vector lengths do not match declared dimensions".into(),
            ));
        }
        let mut a = Array2::zeros((self.n, self.p));
        for (i, row) in self.a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[(i, j)] = from64(v)?;
            }
        }
        let y = self
            .y
            .iter()
            .map(|&v| from64(v))
            .collect::<Result<Array1<S>>>()?;
        let x_true = self
            .x_true
            .iter()
            .map(|&v| from64(v))
            .collect::<Result<Array1<S>>>()?;
        let inst = ProblemInstance::new(a, y, from64(self.beta)?)?;
        Ok((inst, x_true))
    }

    /// Serialize with 17-significant-digit floats.
    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser =
            serde_json::Serializer::with_formatter(&mut out, SignificantDigitsFormatter);
        serde::Serialize::serialize(self, &mut ser).expect("in-memory serialization");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))
    }
}

/// JSON formatter writing every float with 17 significant digits
/// (scientific form), enough for exact f64 round-trips.
struct SignificantDigitsFormatter;

impl serde_json::ser::Formatter for SignificantDigitsFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{:.16e}", f64::from(value))
    }
}
