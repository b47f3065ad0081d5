//! MC and MLMC estimation of the endpoint mean, per-level error curves,
//! and the cost-optimal level/sample-size planners.
//!
//! Sample generation is parallel over sample indices; every sample owns a
//! substream keyed by `(master seed, scheme tag, level, index)`, and all
//! reductions run in deterministic index order, so results are independent
//! of the worker count.

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::rng::substream;
use crate::scalar::{cast, Real};
use crate::schemes::{
    simulate_coupled, simulate_path, CoupledEndpoints, GaussianNoise, LevelGrid, SchemeKind,
};
use ndarray::Array1;
use rayon::prelude::*;

/// Squared distances `e_l = |mean_L - mean_l|^2` between the level-l mean
/// and the reference-level mean, for a range of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve<S> {
    pub scheme: SchemeKind,
    pub reference_level: u32,
    /// `(level, e)` pairs, sorted by level.
    pub entries: Vec<(u32, S)>,
}

impl<S: Real> ErrorCurve<S> {
    pub fn e_at(&self, level: u32) -> Option<S> {
        self.entries
            .iter()
            .find(|(l, _)| *l == level)
            .map(|&(_, e)| e)
    }
}

/// Single-level MC plan: level, sample size and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct McPlan<S> {
    pub lopt: u32,
    pub nopt: u64,
    /// Pre-rounding sample size `Var / (eta^2 - e)`.
    pub nopt_real: S,
    pub var_lopt: S,
    /// `nopt * 2^lopt` (integer sample size).
    pub cost: S,
    /// `nopt_real * 2^lopt`, the paper-comparable real-valued cost.
    pub cost_real: S,
}

/// Multilevel plan: per-level variances, sample sizes and total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcPlan<S> {
    pub l_s: u32,
    pub lopt: u32,
    /// `V_{l_s}, ..., V_{lopt}` as supplied by the caller.
    pub v: Vec<S>,
    /// Rounded sample sizes (ceiling, floored at 2).
    pub n: Vec<u64>,
    /// Pre-rounding Lagrange-optimal sample sizes.
    pub n_real: Vec<S>,
    /// `sum_l n_l 2^l` over the rounded sizes.
    pub cost: S,
    /// Cost of the pre-rounding allocation.
    pub cost_real: S,
}

fn pow2<S: Real>(level: u32) -> S {
    cast::<S>(2.0).powi(level as i32)
}

/// Endpoints of `n` independent paths of `scheme` on `grid`, all started
/// at zero, sample `k` driven by the substream
/// `(master_seed, scheme path tag, level, k)`.
pub fn sample_endpoints<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    grid: &LevelGrid<S>,
    n: u64,
    master_seed: u64,
) -> Result<Vec<Array1<S>>> {
    let x0 = Array1::zeros(inst.p());
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut noise =
                GaussianNoise(substream(master_seed, scheme.path_tag(), grid.level(), k));
            simulate_path(scheme, inst, grid, &x0, &mut noise)
        })
        .collect()
}

/// `n` independent coupled fine/coarse pairs at `fine_grid`, sample `k`
/// driven by `(master_seed, scheme coupled tag, fine level, k)`.
pub fn sample_coupled<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    fine_grid: &LevelGrid<S>,
    n: u64,
    master_seed: u64,
) -> Result<Vec<CoupledEndpoints<S>>> {
    let x0 = Array1::zeros(inst.p());
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut noise = GaussianNoise(substream(
                master_seed,
                scheme.coupled_tag(),
                fine_grid.level(),
                k,
            ));
            simulate_coupled(scheme, inst, fine_grid, &x0, &mut noise)
        })
        .collect()
}

/// Two-pass mean and summed per-coordinate population variance (divisor N)
/// of a set of vectors, reduced in index order.
pub fn mean_and_variance<S: Real>(vectors: &[Array1<S>]) -> (Array1<S>, S) {
    let n = vectors.len();
    assert!(n > 0, "empty sample");
    let p = vectors[0].len();
    let mut mean = Array1::<S>::zeros(p);
    for v in vectors {
        mean += v;
    }
    let n_s = S::from_usize(n).unwrap();
    mean.mapv_inplace(|t| t / n_s);
    let mut var = S::zero();
    for v in vectors {
        let d = v - &mean;
        var += d.dot(&d);
    }
    (mean, var / n_s)
}

/// Sample mean of `n` endpoints at one level, plus the summed
/// per-coordinate population variance.
pub fn mc_mean<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    grid: &LevelGrid<S>,
    n: u64,
    master_seed: u64,
) -> Result<(Array1<S>, S)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "mc_mean needs at least 2 samples, got {n}"
        )));
    }
    let endpoints = sample_endpoints(scheme, inst, grid, n, master_seed)?;
    Ok(mean_and_variance(&endpoints))
}

/// Error curve against a precomputed reference mean.
pub fn error_curve_with_reference<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    horizon: S,
    levels: impl IntoIterator<Item = u32>,
    reference_level: u32,
    reference_mean: &Array1<S>,
    n: u64,
    master_seed: u64,
) -> Result<ErrorCurve<S>> {
    let mut entries = Vec::new();
    for level in levels {
        if level > reference_level {
            return Err(Error::InvalidParameter(format!(
                "curve level {level} exceeds reference level {reference_level}"
            )));
        }
        let grid = LevelGrid::new(horizon, level)?;
        let (mean, _) = mc_mean(scheme, inst, &grid, n, master_seed)?;
        let diff = reference_mean - &mean;
        entries.push((level, diff.dot(&diff)));
    }
    entries.sort_by_key(|&(l, _)| l);
    Ok(ErrorCurve {
        scheme,
        reference_level,
        entries,
    })
}

/// Error curve `e_l = |mean_L - mean_l|^2` for `l` over `levels`, with one
/// reference run of `n` samples at `reference_level`.
pub fn error_curve<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    horizon: S,
    levels: impl IntoIterator<Item = u32>,
    reference_level: u32,
    n: u64,
    master_seed: u64,
) -> Result<ErrorCurve<S>> {
    let ref_grid = LevelGrid::new(horizon, reference_level)?;
    let (reference_mean, _) = mc_mean(scheme, inst, &ref_grid, n, master_seed)?;
    error_curve_with_reference(
        scheme,
        inst,
        horizon,
        levels,
        reference_level,
        &reference_mean,
        n,
        master_seed,
    )
}

/// Pick the MC level and sample size: `lopt` minimizes
/// `|3 e_l - 2 e_{l+1} - eta^2|` over levels with `e_l < eta^2` (ties to
/// the smaller level), then `Nopt = ceil(Var_lopt / (eta^2 - e_lopt))`,
/// floored at 2. `var_provider` supplies `Var_l` for the chosen level.
pub fn mc_plan<S: Real>(
    curve: &ErrorCurve<S>,
    eta2: S,
    mut var_provider: impl FnMut(u32) -> Result<S>,
) -> Result<McPlan<S>> {
    let entries = &curve.entries;
    let mut best: Option<(S, u32, S)> = None; // (score, level, e_l)
    for w in entries.windows(2) {
        let (l, e_l) = w[0];
        let (next_l, e_next) = w[1];
        if next_l != l + 1 {
            continue;
        }
        if !(e_l < eta2) {
            continue;
        }
        let score = (cast::<S>(3.0) * e_l - cast::<S>(2.0) * e_next - eta2).abs();
        if best.map_or(true, |(s, _, _)| score < s) {
            best = Some((score, l, e_l));
        }
    }
    let (_, lopt, e_lopt) = best.ok_or(Error::NoAdmissibleLevel {
        eta2: eta2.to_f64().unwrap_or(f64::NAN),
    })?;
    let var_lopt = var_provider(lopt)?;
    let nopt_real = var_lopt / (eta2 - e_lopt);
    let nopt = (nopt_real.ceil().to_u64().unwrap_or(2)).max(2);
    Ok(McPlan {
        lopt,
        nopt,
        nopt_real,
        var_lopt,
        cost: S::from_u64(nopt).unwrap() * pow2(lopt),
        cost_real: nopt_real * pow2(lopt),
    })
}

/// MLMC level choice: the level whose `e_l` is closest to `eta^2 / 2`
/// (ties to the smaller level).
pub fn mlmc_choose_level<S: Real>(curve: &ErrorCurve<S>, eta2: S) -> Result<u32> {
    let target = eta2 / cast::<S>(2.0);
    curve
        .entries
        .iter()
        .map(|&(l, e)| ((e - target).abs(), l))
        .fold(None::<(S, u32)>, |best, (score, l)| match best {
            Some((s, _)) if s <= score => best,
            _ => Some((score, l)),
        })
        .map(|(_, l)| l)
        .ok_or(Error::NoAdmissibleLevel {
            eta2: eta2.to_f64().unwrap_or(f64::NAN),
        })
}

/// Summed per-coordinate population variance of the coupled differences at
/// one level (the `V_l` of the multilevel telescope).
pub fn delta_variance<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    fine_grid: &LevelGrid<S>,
    n: u64,
    master_seed: u64,
) -> Result<S> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "delta_variance needs at least 2 samples, got {n}"
        )));
    }
    let pairs = sample_coupled(scheme, inst, fine_grid, n, master_seed)?;
    let deltas: Vec<Array1<S>> = pairs.into_iter().map(|c| c.delta).collect();
    let (_, v) = mean_and_variance(&deltas);
    Ok(v)
}

/// Lagrange-optimal MLMC allocation for the chosen level.
///
/// `v[i]` is the variance of level `l_s + i`: the endpoint variance at the
/// base level, the coupled-difference variance above it. It must cover at
/// least `l_s ..= lopt`. Sample sizes are
/// `N_l = (eta^2 - e_lopt)^{-1} sqrt(V_l 2^{-l}) sum_k sqrt(V_k 2^k)`
/// with the sum over `k = l_s ..= lopt`, then ceiled and floored at 2.
pub fn mlmc_plan<S: Real>(
    curve: &ErrorCurve<S>,
    eta2: S,
    l_s: u32,
    v: &[S],
) -> Result<MlmcPlan<S>> {
    let lopt = mlmc_choose_level(curve, eta2)?;
    let e_lopt = curve.e_at(lopt).expect("lopt comes from the curve");
    if !(eta2 > e_lopt) {
        return Err(Error::InvalidParameter(format!(
            "eta^2 = {eta2} does not exceed e_lopt = {e_lopt}"
        )));
    }
    if lopt < l_s {
        return Err(Error::InvalidParameter(format!(
            "chosen level {lopt} is below the base level {l_s}"
        )));
    }
    let n_levels = (lopt - l_s + 1) as usize;
    if v.len() < n_levels {
        return Err(Error::InvalidParameter(format!(
            "variance list covers {} levels, need {n_levels}",
            v.len()
        )));
    }
    let v = &v[..n_levels];
    let budget = eta2 - e_lopt;
    let sum_root: S = v
        .iter()
        .enumerate()
        .map(|(i, &vl)| (vl * pow2::<S>(l_s + i as u32)).sqrt())
        .sum();
    let mut n_real = Vec::with_capacity(n_levels);
    let mut n = Vec::with_capacity(n_levels);
    let mut cost = S::zero();
    let mut cost_real = S::zero();
    for (i, &vl) in v.iter().enumerate() {
        let level = l_s + i as u32;
        let real = (vl / pow2::<S>(level)).sqrt() * sum_root / budget;
        let rounded = (real.ceil().to_u64().unwrap_or(2)).max(2);
        cost += S::from_u64(rounded).unwrap() * pow2(level);
        cost_real += real * pow2(level);
        n_real.push(real);
        n.push(rounded);
    }
    Ok(MlmcPlan {
        l_s,
        lopt,
        v: v.to_vec(),
        n,
        n_real,
        cost,
        cost_real,
    })
}

/// Multilevel estimate of the endpoint mean: base-level sample mean plus
/// the telescoping sum of coupled-difference means. Returns the estimate
/// and the per-level variances `[V_{l_s}, V_{l_s+1}, ..., V_{lopt}]`
/// (endpoint variance at the base level, delta variances above).
///
/// `n[i]` is the sample size for level `l_s + i`; all levels use disjoint
/// substreams so the blocks are independent.
pub fn mlmc_estimate<S: Real>(
    scheme: SchemeKind,
    inst: &ProblemInstance<S>,
    horizon: S,
    l_s: u32,
    lopt: u32,
    n: &[u64],
    master_seed: u64,
) -> Result<(Array1<S>, Vec<S>)> {
    if lopt < l_s {
        return Err(Error::InvalidParameter(format!(
            "lopt = {lopt} must be >= l_s = {l_s}"
        )));
    }
    let n_levels = (lopt - l_s + 1) as usize;
    if n.len() != n_levels {
        return Err(Error::DimensionMismatch {
            expected: n_levels,
            got: n.len(),
        });
    }
    if n.iter().any(|&nl| nl < 2) {
        return Err(Error::InvalidParameter(
            "every level needs at least 2 samples".into(),
        ));
    }
    let base_grid = LevelGrid::new(horizon, l_s)?;
    let endpoints = sample_endpoints(scheme, inst, &base_grid, n[0], master_seed)?;
    let (mut mean, base_var) = mean_and_variance(&endpoints);
    let mut per_level_v = vec![base_var];
    for (i, &nl) in n.iter().enumerate().skip(1) {
        let level = l_s + i as u32;
        let fine_grid = LevelGrid::new(horizon, level)?;
        let pairs = sample_coupled(scheme, inst, &fine_grid, nl, master_seed)?;
        let deltas: Vec<Array1<S>> = pairs.into_iter().map(|c| c.delta).collect();
        let (delta_mean, delta_var) = mean_and_variance(&deltas);
        mean += &delta_mean;
        per_level_v.push(delta_var);
    }
    Ok((mean, per_level_v))
}
