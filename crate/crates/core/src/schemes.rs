//! Time discretizations of the Langevin diffusion with l1 drift, on dyadic
//! level grids, plus the fine/coarse coupled simulation MLMC needs.
//!
//! Three schemes share the drift `A^T (y - A x)` and differ in where the
//! prox, the drift and the Gaussian increment enter the update:
//!
//! * `SIES`  : prox( x + drift dt + sqrt(dt) n )
//! * `EES1`  : prox( x + drift dt ) + sqrt(dt) n
//! * `EES2`  : prox( x ) + drift dt + sqrt(dt) n

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::prox::soft_threshold;
use crate::scalar::{cast, Real};
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dyadic time grid: `2^level` steps of size `T 2^(-level)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid<S> {
    horizon: S,
    level: u32,
}

impl<S: Real> LevelGrid<S> {
    pub fn new(horizon: S, level: u32) -> Result<Self> {
        if !(horizon > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if level > 62 {
            return Err(Error::InvalidParameter(format!(
                "level {level} too large for a step count"
            )));
        }
        Ok(Self { horizon, level })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Timestep `T 2^(-level)`; exact in floating point.
    pub fn dt(&self) -> S {
        self.horizon * cast::<S>(2.0).powi(-(self.level as i32))
    }

    pub fn steps(&self) -> u64 {
        1u64 << self.level
    }

    /// The one-level-coarser grid over the same horizon.
    pub fn coarsen(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::CoarsestLevel);
        }
        Self::new(self.horizon, self.level - 1)
    }
}

/// Which discretization to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Sies,
    Ees1,
    Ees2,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Sies, SchemeKind::Ees1, SchemeKind::Ees2];

    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::Sies => "SIES",
            SchemeKind::Ees1 => "EES1",
            SchemeKind::Ees2 => "EES2",
        }
    }

    /// Substream tag for single-level paths of this scheme.
    pub(crate) fn path_tag(&self) -> &'static str {
        match self {
            SchemeKind::Sies => "path/sies",
            SchemeKind::Ees1 => "path/ees1",
            SchemeKind::Ees2 => "path/ees2",
        }
    }

    /// Substream tag for coupled fine/coarse pairs of this scheme.
    pub(crate) fn coupled_tag(&self) -> &'static str {
        match self {
            SchemeKind::Sies => "coupled/sies",
            SchemeKind::Ees1 => "coupled/ees1",
            SchemeKind::Ees2 => "coupled/ees2",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Source of per-step noise vectors. Gaussian in production; stubs make the
/// degenerate tests expressible.
pub trait NoiseSource<S> {
    /// Fill `out` with the next noise vector (raw, unscaled).
    fn fill(&mut self, out: &mut [S]);
}

/// Standard Gaussian noise drawn from any RNG.
pub struct GaussianNoise<R>(pub R);

impl<S: Real, R: Rng> NoiseSource<S> for GaussianNoise<R> {
    fn fill(&mut self, out: &mut [S]) {
        for v in out {
            *v = S::standard_normal(&mut self.0);
        }
    }
}

/// All-zero noise: paths follow the deterministic drift recursion.
pub struct ZeroNoise;

impl<S: Real> NoiseSource<S> for ZeroNoise {
    fn fill(&mut self, out: &mut [S]) {
        for v in out {
            *v = S::zero();
        }
    }
}

/// One update with a pre-scaled Brownian increment. Coupled simulation
/// feeds the coarse path the exact sum of the two fine increments through
/// this entry point.
pub fn step_with_increment<S: Real>(
    kind: SchemeKind,
    inst: &ProblemInstance<S>,
    x: &Array1<S>,
    dt: S,
    increment: &Array1<S>,
) -> Array1<S> {
    let drift = -inst.grad_quad(x); // A^T (y - A x)
    match kind {
        SchemeKind::Sies => {
            let inner = x + &drift.mapv(|v| v * dt) + increment;
            soft_threshold(&inner, dt)
        }
        SchemeKind::Ees1 => {
            let inner = x + &drift.mapv(|v| v * dt);
            soft_threshold(&inner, dt) + increment
        }
        SchemeKind::Ees2 => soft_threshold(x, dt) + &drift.mapv(|v| v * dt) + increment,
    }
}

/// One update from the raw standard-Gaussian vector `noise` (scaled by
/// `sqrt(dt)` internally).
pub fn step<S: Real>(
    kind: SchemeKind,
    inst: &ProblemInstance<S>,
    x: &Array1<S>,
    dt: S,
    noise: &Array1<S>,
) -> Result<Array1<S>> {
    if x.len() != inst.p() || noise.len() != inst.p() {
        return Err(Error::DimensionMismatch {
            expected: inst.p(),
            got: if x.len() != inst.p() {
                x.len()
            } else {
                noise.len()
            },
        });
    }
    let sqrt_dt = dt.sqrt();
    let increment = noise.mapv(|v| v * sqrt_dt);
    Ok(step_with_increment(kind, inst, x, dt, &increment))
}

/// Run the scheme over the whole grid and return the endpoint.
pub fn simulate_path<S: Real, N: NoiseSource<S>>(
    kind: SchemeKind,
    inst: &ProblemInstance<S>,
    grid: &LevelGrid<S>,
    x0: &Array1<S>,
    noise: &mut N,
) -> Result<Array1<S>> {
    if x0.len() != inst.p() {
        return Err(Error::DimensionMismatch {
            expected: inst.p(),
            got: x0.len(),
        });
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut x = x0.clone();
    let mut buf = vec![S::zero(); inst.p()];
    for _ in 0..grid.steps() {
        noise.fill(&mut buf);
        let increment = Array1::from_shape_fn(inst.p(), |i| buf[i] * sqrt_dt);
        x = step_with_increment(kind, inst, &x, dt, &increment);
    }
    Ok(x)
}

/// A decimated record of one path: `(step index, state)` pairs, always
/// containing step 0 and the final step.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<(u64, Array1<S>)>,
}

/// Like [`simulate_path`] but also records every `stride`-th state.
pub fn simulate_path_recorded<S: Real, N: NoiseSource<S>>(
    kind: SchemeKind,
    inst: &ProblemInstance<S>,
    grid: &LevelGrid<S>,
    x0: &Array1<S>,
    stride: u64,
    noise: &mut N,
) -> Result<(Array1<S>, Trajectory<S>)> {
    if x0.len() != inst.p() {
        return Err(Error::DimensionMismatch {
            expected: inst.p(),
            got: x0.len(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut x = x0.clone();
    let mut states = vec![(0u64, x.clone())];
    let mut buf = vec![S::zero(); inst.p()];
    for k in 1..=grid.steps() {
        noise.fill(&mut buf);
        let increment = Array1::from_shape_fn(inst.p(), |i| buf[i] * sqrt_dt);
        x = step_with_increment(kind, inst, &x, dt, &increment);
        if k % stride == 0 || k == grid.steps() {
            states.push((k, x.clone()));
        }
    }
    Ok((x.clone(), Trajectory { states }))
}

/// Endpoints of one coupled fine/coarse pair driven by the same Brownian
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEndpoints<S> {
    pub fine: Array1<S>,
    pub coarse: Array1<S>,
    pub delta: Array1<S>,
}

/// Simulate one fine path at `fine_grid` and its coarse companion one
/// level below, from the same increments: noise is consumed fine-first and
/// each coarse increment is the exact pairwise sum of the two fine
/// increments it spans.
pub fn simulate_coupled<S: Real, N: NoiseSource<S>>(
    kind: SchemeKind,
    inst: &ProblemInstance<S>,
    fine_grid: &LevelGrid<S>,
    x0: &Array1<S>,
    noise: &mut N,
) -> Result<CoupledEndpoints<S>> {
    if x0.len() != inst.p() {
        return Err(Error::DimensionMismatch {
            expected: inst.p(),
            got: x0.len(),
        });
    }
    let coarse_grid = fine_grid.coarsen()?;
    let dt_f = fine_grid.dt();
    let dt_c = coarse_grid.dt();
    let sqrt_dt_f = dt_f.sqrt();
    let p = inst.p();
    let mut xf = x0.clone();
    let mut xc = x0.clone();
    let mut buf = vec![S::zero(); p];
    for _ in 0..coarse_grid.steps() {
        noise.fill(&mut buf);
        let inc1 = Array1::from_shape_fn(p, |i| buf[i] * sqrt_dt_f);
        xf = step_with_increment(kind, inst, &xf, dt_f, &inc1);
        noise.fill(&mut buf);
        let inc2 = Array1::from_shape_fn(p, |i| buf[i] * sqrt_dt_f);
        xf = step_with_increment(kind, inst, &xf, dt_f, &inc2);
        let inc_coarse = &inc1 + &inc2;
        xc = step_with_increment(kind, inst, &xc, dt_c, &inc_coarse);
    }
    let delta = &xf - &xc;
    Ok(CoupledEndpoints {
        fine: xf,
        coarse: xc,
        delta,
    })
}

/// Smallest level of the dyadic grid family: `ceil(log2 T) + 1`, clamped at
/// zero. For the benchmark horizon `T = 10` this is 5.
pub fn default_small_level<S: Real>(horizon: S) -> Result<u32> {
    if !(horizon > S::zero()) {
        return Err(Error::InvalidParameter(format!(
            "time horizon must be positive, got {horizon}"
        )));
    }
    let raw = horizon.log2().ceil().to_i64().ok_or_else(|| {
        Error::InvalidParameter(format!("horizon {horizon} out of range"))
    })? + 1;
    Ok(raw.max(0) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_problem;
    use crate::rng::substream;
    use ndarray::{array, Array2};

    fn flat_problem() -> ProblemInstance<f64> {
        // A = 0, one dimension: the pure l1-drift diffusion.
        ProblemInstance::new(Array2::zeros((1, 1)), array![0.0], 1.0).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = LevelGrid::new(10.0f64, 5).unwrap();
        assert_eq!(g.steps(), 32);
        assert_eq!(g.dt(), 10.0 / 32.0);
        assert_eq!(g.dt() * g.steps() as f64, 10.0);
        assert!(LevelGrid::new(0.0f64, 3).is_err());
    }

    #[test]
    fn small_level_convention() {
        assert_eq!(default_small_level(10.0f64).unwrap(), 5);
        assert_eq!(default_small_level(1.0f64).unwrap(), 1);
        assert_eq!(default_small_level(8.0f64).unwrap(), 4);
        assert_eq!(default_small_level(0.25f64).unwrap(), 0);
    }

    #[test]
    fn origin_is_a_fixed_point_without_noise() {
        let (inst, _) = generate_problem::<f64>(4, 3, 1).unwrap();
        let zeroed =
            ProblemInstance::new(inst.design().clone(), Array1::zeros(3), 1.0).unwrap();
        let x = Array1::zeros(4);
        let noise = Array1::zeros(4);
        for kind in SchemeKind::ALL {
            let next = step(kind, &zeroed, &x, 0.25, &noise).unwrap();
            assert!(next.iter().all(|&v| v == 0.0), "{kind}");
        }
    }

    #[test]
    fn sies_flat_step_is_soft_threshold() {
        let inst = flat_problem();
        let next = step(SchemeKind::Sies, &inst, &array![2.0], 0.5, &array![0.0]).unwrap();
        assert_eq!(next, array![1.5]);
    }

    #[test]
    fn ees1_and_ees2_coincide_without_design() {
        let inst = flat_problem();
        let mut rng = substream(9, "scheme-test", 0, 0);
        for _ in 0..50 {
            let x = array![f64::standard_normal(&mut rng) * 3.0];
            let n = array![f64::standard_normal(&mut rng)];
            let a = step(SchemeKind::Ees1, &inst, &x, 0.125, &n).unwrap();
            let b = step(SchemeKind::Ees2, &inst, &x, 0.125, &n).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_step_grid_reduces_to_step() {
        let (inst, _) = generate_problem::<f64>(5, 3, 7).unwrap();
        let grid = LevelGrid::new(0.5f64, 0).unwrap();
        let x0 = Array1::zeros(5);
        let mut rng = substream(11, "single", 0, 0);
        let mut noise_vec = Array1::zeros(5);
        for v in noise_vec.iter_mut() {
            *v = f64::standard_normal(&mut rng);
        }
        struct Replay(Vec<f64>);
        impl NoiseSource<f64> for Replay {
            fn fill(&mut self, out: &mut [f64]) {
                out.copy_from_slice(&self.0);
            }
        }
        let mut replay = Replay(noise_vec.to_vec());
        let endpoint =
            simulate_path(SchemeKind::Sies, &inst, &grid, &x0, &mut replay).unwrap();
        let direct = step(SchemeKind::Sies, &inst, &x0, grid.dt(), &noise_vec).unwrap();
        assert_eq!(endpoint, direct);
    }

    #[test]
    fn paths_are_deterministic_in_the_seed() {
        let (inst, _) = generate_problem::<f64>(10, 7, 3).unwrap();
        let grid = LevelGrid::new(10.0f64, 6).unwrap();
        let x0 = Array1::zeros(10);
        for kind in SchemeKind::ALL {
            let mut n1 = GaussianNoise(substream(5, "det", 6, 0));
            let mut n2 = GaussianNoise(substream(5, "det", 6, 0));
            let a = simulate_path(kind, &inst, &grid, &x0, &mut n1).unwrap();
            let b = simulate_path(kind, &inst, &grid, &x0, &mut n2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn recorded_trajectory_has_all_steps() {
        let (inst, _) = generate_problem::<f64>(3, 2, 5).unwrap();
        let grid = LevelGrid::new(2.0f64, 4).unwrap();
        let x0 = Array1::zeros(3);
        let mut noise = GaussianNoise(substream(6, "rec", 4, 0));
        let (endpoint, traj) =
            simulate_path_recorded(SchemeKind::Ees1, &inst, &grid, &x0, 1, &mut noise).unwrap();
        assert_eq!(traj.states.len() as u64, grid.steps() + 1);
        assert_eq!(traj.states[0].0, 0);
        assert_eq!(traj.states.last().unwrap().0, grid.steps());
        assert_eq!(traj.states.last().unwrap().1, endpoint);
    }

    #[test]
    fn decimated_trajectory_keeps_endpoint() {
        let (inst, _) = generate_problem::<f64>(3, 2, 5).unwrap();
        let grid = LevelGrid::new(2.0f64, 5).unwrap();
        let x0 = Array1::zeros(3);
        let mut noise = GaussianNoise(substream(6, "rec", 5, 0));
        let (endpoint, traj) =
            simulate_path_recorded(SchemeKind::Sies, &inst, &grid, &x0, 7, &mut noise).unwrap();
        assert_eq!(traj.states.last().unwrap().0, 32);
        assert_eq!(traj.states.last().unwrap().1, endpoint);
    }

    #[test]
    fn coarse_increment_identity() {
        // sqrt(dt_{l-1}) (a+b)/sqrt(2) equals sqrt(dt_l) (a+b) to a few ulps.
        let mut rng = substream(8, "incr", 0, 0);
        for level in 1..12u32 {
            let fine = LevelGrid::new(10.0f64, level).unwrap();
            let coarse = fine.coarsen().unwrap();
            for _ in 0..100 {
                let a = f64::standard_normal(&mut rng);
                let b = f64::standard_normal(&mut rng);
                let lhs = coarse.dt().sqrt() * (a + b) / 2.0f64.sqrt();
                let rhs = fine.dt().sqrt() * (a + b);
                assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn zero_noise_coupled_matches_independent_recursions() {
        let (inst, _) = generate_problem::<f64>(10, 7, 17).unwrap();
        let fine = LevelGrid::new(10.0f64, 6).unwrap();
        let x0 = Array1::zeros(10);
        for kind in SchemeKind::ALL {
            let pair =
                simulate_coupled(kind, &inst, &fine, &x0, &mut ZeroNoise).unwrap();
            let f = simulate_path(kind, &inst, &fine, &x0, &mut ZeroNoise).unwrap();
            let c = simulate_path(kind, &inst, &fine.coarsen().unwrap(), &x0, &mut ZeroNoise)
                .unwrap();
            assert_eq!(pair.fine, f, "{kind}");
            assert_eq!(pair.coarse, c, "{kind}");
            let gap = &f - &c;
            assert_eq!(pair.delta, gap, "{kind}");
        }
    }

    #[test]
    fn coupled_rejects_level_zero() {
        let (inst, _) = generate_problem::<f64>(2, 2, 1).unwrap();
        let grid = LevelGrid::new(1.0f64, 0).unwrap();
        let x0 = Array1::zeros(2);
        assert!(matches!(
            simulate_coupled(SchemeKind::Sies, &inst, &grid, &x0, &mut ZeroNoise),
            Err(Error::CoarsestLevel)
        ));
    }
}
