//! Metropolis-Hastings chains targeting the posterior, with proposals
//! built from the explicit Euler scheme kernels (the EES1 proposal is the
//! PMALA sampler) or a Gaussian random walk, plus the replication-based
//! MSE/cost search.

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::rng::{substream, Stream};
use crate::scalar::{cast, Real};
use crate::schemes::{step_with_increment, SchemeKind};
use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;

/// Proposal family of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    /// One EES1 step (prox of the drifted state, then noise): PMALA.
    Ees1,
    /// One EES2 step (prox, then drift and noise).
    Ees2,
    /// Gaussian random walk.
    RandomWalk,
}

/// A Metropolis-Hastings chain specification. `dt` drives the EES
/// proposals, `sigma2` the random walk; exactly one of them is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec<S> {
    proposal: ProposalKind,
    dt: Option<S>,
    sigma2: Option<S>,
    burn_in: u64,
}

impl<S: Real> ChainSpec<S> {
    pub fn ees1(dt: S) -> Result<Self> {
        Self::scheme_spec(ProposalKind::Ees1, dt)
    }

    pub fn ees2(dt: S) -> Result<Self> {
        Self::scheme_spec(ProposalKind::Ees2, dt)
    }

    fn scheme_spec(proposal: ProposalKind, dt: S) -> Result<Self> {
        if !(dt > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "proposal timestep must be positive, got {dt}"
            )));
        }
        Ok(Self {
            proposal,
            dt: Some(dt),
            sigma2: None,
            burn_in: 0,
        })
    }

    pub fn random_walk(sigma2: S) -> Result<Self> {
        if !(sigma2 > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "random-walk variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            proposal: ProposalKind::RandomWalk,
            dt: None,
            sigma2: Some(sigma2),
            burn_in: 0,
        })
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn proposal(&self) -> ProposalKind {
        self.proposal
    }

    pub fn dt(&self) -> Option<S> {
        self.dt
    }

    pub fn sigma2(&self) -> Option<S> {
        self.sigma2
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    /// Proposal mean and isotropic covariance scale at the current state.
    fn mean_and_scale(&self, inst: &ProblemInstance<S>, x: &Array1<S>) -> (Array1<S>, S) {
        match self.proposal {
            ProposalKind::Ees1 => {
                let dt = self.dt.expect("dt set for EES proposals");
                let zero = Array1::zeros(x.len());
                (
                    step_with_increment(SchemeKind::Ees1, inst, x, dt, &zero),
                    dt,
                )
            }
            ProposalKind::Ees2 => {
                let dt = self.dt.expect("dt set for EES proposals");
                let zero = Array1::zeros(x.len());
                (
                    step_with_increment(SchemeKind::Ees2, inst, x, dt, &zero),
                    dt,
                )
            }
            ProposalKind::RandomWalk => {
                (x.clone(), self.sigma2.expect("sigma2 set for random walk"))
            }
        }
    }
}

/// Unnormalized log target of a chain. The posterior instance is the
/// production target; tests inject shifted or degenerate ones.
pub trait LogTarget<S> {
    fn log_density(&self, x: &Array1<S>) -> S;
}

impl<S: Real> LogTarget<S> for ProblemInstance<S> {
    fn log_density(&self, x: &Array1<S>) -> S {
        self.log_posterior_unchecked(x)
    }
}

fn check_len<S: Real>(inst: &ProblemInstance<S>, x: &Array1<S>) -> Result<()> {
    if x.len() != inst.p() {
        return Err(Error::DimensionMismatch {
            expected: inst.p(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Draw one proposal from the chain's kernel.
pub fn proposal_sample<S: Real, R: Rng>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    x: &Array1<S>,
    rng: &mut R,
) -> Result<Array1<S>> {
    check_len(inst, x)?;
    let (mean, scale) = spec.mean_and_scale(inst, x);
    let sd = scale.sqrt();
    Ok(mean + &Array1::from_shape_fn(x.len(), |_| S::standard_normal(rng) * sd))
}

/// Log transition density of the proposal kernel, normalization included.
pub fn proposal_logdensity<S: Real>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    x_from: &Array1<S>,
    x_to: &Array1<S>,
) -> Result<S> {
    check_len(inst, x_from)?;
    check_len(inst, x_to)?;
    let (mean, scale) = spec.mean_and_scale(inst, x_from);
    let d = x_to - &mean;
    let two = cast::<S>(2.0);
    let p = S::from_usize(x_from.len()).unwrap();
    let norm = -(p / two) * (two * cast::<S>(std::f64::consts::PI) * scale).ln();
    Ok(norm - d.dot(&d) / (two * scale))
}

/// Log acceptance ratio, clipped at zero:
/// `min(0, [log rho(x2) - log rho(x1)] + [log q(x2 -> x1) - log q(x1 -> x2)])`.
pub fn log_acceptance<S: Real, T: LogTarget<S> + ?Sized>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    target: &T,
    x_cur: &Array1<S>,
    x_prop: &Array1<S>,
) -> Result<S> {
    let log_prop = target.log_density(x_prop);
    if log_prop == S::neg_infinity() {
        // Zero target density at the proposal: alpha = 0, and the naive
        // difference below would be NaN when the current density is also 0.
        return Ok(S::neg_infinity());
    }
    let target_term = log_prop - target.log_density(x_cur);
    let forward = proposal_logdensity(spec, inst, x_cur, x_prop)?;
    let backward = proposal_logdensity(spec, inst, x_prop, x_cur)?;
    // Grouping the kernel terms first makes symmetric kernels cancel
    // exactly, so the RW ratio reduces bit-for-bit to the target ratio.
    let proposal_term = backward - forward;
    Ok((target_term + proposal_term).min(S::zero()))
}

/// One Metropolis-Hastings transition against an arbitrary target. Draws
/// the proposal, then one uniform for the accept test; the draw order is
/// part of the reproducibility contract.
pub fn mh_step_on<S: Real, T: LogTarget<S> + ?Sized, R: Rng>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    target: &T,
    x: &Array1<S>,
    rng: &mut R,
) -> Result<(Array1<S>, bool)> {
    let proposal = proposal_sample(spec, inst, x, rng)?;
    let log_alpha = log_acceptance(spec, inst, target, x, &proposal)?;
    let u: S = S::open_unit(rng);
    if u.ln() < log_alpha {
        Ok((proposal, true))
    } else {
        Ok((x.clone(), false))
    }
}

/// One transition of the chain targeting the posterior of `inst`.
pub fn mh_step<S: Real, R: Rng>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    x: &Array1<S>,
    rng: &mut R,
) -> Result<(Array1<S>, bool)> {
    mh_step_on(spec, inst, inst, x, rng)
}

struct ChainState<S> {
    x: Array1<S>,
    sum: Array1<S>,
    count: u64,
    rng: Stream,
}

impl<S: Real> Clone for ChainState<S> {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            sum: self.sum.clone(),
            count: self.count,
            rng: self.rng.clone(),
        }
    }
}

fn advance_chains<S: Real>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    chains: &mut [ChainState<S>],
    target_count: u64,
) -> Result<()> {
    chains.par_iter_mut().try_for_each(|c| {
        while c.count < target_count {
            let (next, _) = mh_step(spec, inst, &c.x, &mut c.rng)?;
            c.x = next;
            c.sum += &c.x;
            c.count += 1;
        }
        Ok(())
    })
}

fn replication_mse<S: Real>(chains: &[ChainState<S>], reference: &Array1<S>) -> S {
    let m = S::from_usize(chains.len()).unwrap();
    chains
        .iter()
        .map(|c| {
            let mean = c.sum.mapv(|v| v / S::from_u64(c.count).unwrap());
            let d = reference - &mean;
            d.dot(&d)
        })
        .sum::<S>()
        / m
}

/// Cost of the MCMC estimator: the smallest tested chain length `N` whose
/// replication MSE against `reference_mean` falls under `eta2`.
///
/// `m_chains` independent replicate chains are advanced along a doubling
/// schedule `128, 256, ...`; once an `N` passes, the bracketing pair is
/// refined by bisection (restarting from a snapshot of the bracket's lower
/// end). Returns the chosen `N` and the `(N, MSE)` evaluation trace sorted
/// by `N`.
pub fn mcmc_cost<S: Real>(
    spec: &ChainSpec<S>,
    inst: &ProblemInstance<S>,
    eta2: S,
    m_chains: u64,
    reference_mean: &Array1<S>,
    master_seed: u64,
    n_max: u64,
) -> Result<(u64, Vec<(u64, S)>)> {
    if m_chains < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 replicate chains, got {m_chains}"
        )));
    }
    check_len(inst, reference_mean)?;
    let mut chains: Vec<ChainState<S>> = (0..m_chains)
        .map(|i| ChainState {
            x: Array1::zeros(inst.p()),
            sum: Array1::zeros(inst.p()),
            count: 0,
            rng: substream(master_seed, "mcmc-chain", 0, i),
        })
        .collect();
    // Burn-in steps are not counted into the running means.
    if spec.burn_in() > 0 {
        chains.par_iter_mut().try_for_each(|c| {
            for _ in 0..spec.burn_in() {
                let (next, _) = mh_step(spec, inst, &c.x, &mut c.rng)?;
                c.x = next;
            }
            Ok::<(), Error>(())
        })?;
    }

    let mut trace: Vec<(u64, S)> = Vec::new();
    let mut n = 128u64.min(n_max);
    let mut lo;
    let mut hi;
    let mut lo_states;
    // Doubling phase: keep the chain states at the last failing N so the
    // bisection can restart from there.
    let mut failing: Option<(u64, Vec<ChainState<S>>)> = None;
    loop {
        advance_chains(spec, inst, &mut chains, n)?;
        let mse = replication_mse(&chains, reference_mean);
        trace.push((n, mse));
        if mse <= eta2 {
            match failing.take() {
                Some((l, states)) => {
                    lo = l;
                    hi = n;
                    lo_states = states;
                }
                // The very first tested N already passes.
                None => return Ok((n, trace)),
            }
            break;
        }
        if n >= n_max {
            return Err(Error::MseTargetNotReached {
                eta2: eta2.to_f64().unwrap_or(f64::NAN),
                n_max,
                last_mse: mse.to_f64().unwrap_or(f64::NAN),
                trace: trace
                    .iter()
                    .map(|&(k, v)| (k, v.to_f64().unwrap_or(f64::NAN)))
                    .collect(),
            });
        }
        failing = Some((n, chains.clone()));
        n = (n * 2).min(n_max);
    }

    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let mut probe = lo_states.clone();
        advance_chains(spec, inst, &mut probe, mid)?;
        let mse = replication_mse(&probe, reference_mean);
        trace.push((mid, mse));
        if mse <= eta2 {
            hi = mid;
        } else {
            lo = mid;
            lo_states = probe;
        }
    }
    trace.sort_by_key(|&(k, _)| k);
    trace.dedup_by_key(|&mut (k, _)| k);
    Ok((hi, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_problem;
    use ndarray::array;

    fn one_dim() -> ProblemInstance<f64> {
        ProblemInstance::new(array![[1.0]], array![0.0], 1.0).unwrap()
    }

    #[test]
    fn chain_spec_validation() {
        assert!(ChainSpec::ees1(0.1f64).is_ok());
        assert!(ChainSpec::ees1(0.0f64).is_err());
        assert!(ChainSpec::random_walk(0.3f64).is_ok());
        assert!(ChainSpec::random_walk(-0.3f64).is_err());
        let spec = ChainSpec::ees2(0.2f64).unwrap().with_burn_in(5);
        assert_eq!(spec.burn_in(), 5);
        assert_eq!(spec.dt(), Some(0.2));
        assert_eq!(spec.sigma2(), None);
    }

    #[test]
    fn proposal_means_match_the_scheme_kernels() {
        let (inst, _) = generate_problem::<f64>(6, 4, 2).unwrap();
        let mut rng = substream(3, "prop", 0, 0);
        let x = Array1::from_shape_fn(6, |_| f64::standard_normal(&mut rng));
        let dt = 0.05;
        let drift = -inst.grad_quad(&x);
        let expected_ees1 =
            crate::prox::soft_threshold(&(&x + &drift.mapv(|v| v * dt)), dt);
        let expected_ees2 =
            crate::prox::soft_threshold(&x, dt) + &drift.mapv(|v| v * dt);
        let (m1, c1) = ChainSpec::ees1(dt).unwrap().mean_and_scale(&inst, &x);
        let (m2, c2) = ChainSpec::ees2(dt).unwrap().mean_and_scale(&inst, &x);
        assert_eq!(m1, expected_ees1);
        assert_eq!(m2, expected_ees2);
        assert_eq!(c1, dt);
        assert_eq!(c2, dt);
    }

    #[test]
    fn random_walk_kernel_is_symmetric() {
        let inst = one_dim();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let mut rng = substream(4, "sym", 0, 0);
        for _ in 0..50 {
            let a = array![f64::standard_normal(&mut rng) * 2.0];
            let b = array![f64::standard_normal(&mut rng) * 2.0];
            let ab = proposal_logdensity(&spec, &inst, &a, &b).unwrap();
            let ba = proposal_logdensity(&spec, &inst, &b, &a).unwrap();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn logdensity_at_the_mode() {
        let inst = one_dim();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let x = array![0.7];
        let at_mode = proposal_logdensity(&spec, &inst, &x, &x).unwrap();
        assert!((at_mode - (-(0.5) * (2.0 * std::f64::consts::PI * 0.3).ln())).abs() < 1e-14);
        // Hand evaluation: p = 1, sigma^2 = 0.3, from 0 to 0.5.
        let v = proposal_logdensity(&spec, &inst, &array![0.0], &array![0.5]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 0.3).ln() - 0.25 / 0.6;
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn rw_acceptance_reduces_to_target_ratio() {
        let inst = one_dim();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let mut rng = substream(5, "acc", 0, 0);
        for _ in 0..100 {
            let a = array![f64::standard_normal(&mut rng)];
            let b = array![f64::standard_normal(&mut rng)];
            let la = log_acceptance(&spec, &inst, &inst, &a, &b).unwrap();
            let direct = (inst.log_density(&b) - inst.log_density(&a)).min(0.0);
            assert_eq!(la, direct);
        }
    }

    #[test]
    fn degenerate_self_proposal_is_accepted() {
        let inst = one_dim();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let x = array![1.3];
        let la = log_acceptance(&spec, &inst, &inst, &x, &x).unwrap();
        assert_eq!(la, 0.0);
    }

    #[test]
    fn impossible_target_never_moves() {
        struct Wall;
        impl LogTarget<f64> for Wall {
            fn log_density(&self, _: &Array1<f64>) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let inst = one_dim();
        let spec = ChainSpec::random_walk(0.5f64).unwrap();
        let mut rng = substream(6, "wall", 0, 0);
        let mut x = array![0.0];
        for _ in 0..200 {
            let (next, accepted) = mh_step_on(&spec, &inst, &Wall, &x, &mut rng).unwrap();
            assert!(!accepted);
            assert_eq!(next, x);
            x = next;
        }
    }

    #[test]
    fn mcmc_cost_returns_first_n_when_target_is_loose() {
        let (inst, _) = generate_problem::<f64>(4, 3, 8).unwrap();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let reference = Array1::zeros(4);
        let (n, trace) = mcmc_cost(&spec, &inst, 1e12, 10, &reference, 1, 1 << 12).unwrap();
        assert_eq!(n, 128);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn mcmc_cost_fails_loudly_when_unreachable() {
        let (inst, _) = generate_problem::<f64>(4, 3, 8).unwrap();
        let spec = ChainSpec::random_walk(0.3f64).unwrap();
        let reference = Array1::from_elem(4, 1e6);
        match mcmc_cost(&spec, &inst, 1e-12, 10, &reference, 1, 256) {
            Err(Error::MseTargetNotReached { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
