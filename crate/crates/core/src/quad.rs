//! Adaptive quadrature with an embedded error estimate.
//!
//! Simpson panels are refined until the Richardson error estimate
//! `|S_fine - S_coarse| / 15` falls under the local tolerance budget, then
//! the extrapolated value is accumulated. Good to absolute tolerances near
//! the f64 floor for smooth integrands; kinks are handled by splitting the
//! domain at the known kink locations first.

use crate::scalar::{cast, Real};

const MAX_DEPTH: u32 = 60;

fn simpson<S: Real>(fa: S, fm: S, fb: S, h: S) -> S {
    h / cast::<S>(6.0) * (fa + cast::<S>(4.0) * fm + fb)
}

fn adapt<S: Real, F: Fn(S) -> S>(
    f: &F,
    a: S,
    b: S,
    fa: S,
    fm: S,
    fb: S,
    whole: S,
    tol: S,
    depth: u32,
) -> S {
    let two = cast::<S>(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= cast::<S>(15.0) * tol {
        left + right + delta / cast::<S>(15.0)
    } else {
        let half_tol = tol / two;
        adapt(f, a, m, fa, flm, fm, left, half_tol, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, half_tol, depth - 1)
    }
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<S: Real, F: Fn(S) -> S>(f: &F, a: S, b: S, tol: S) -> S {
    if a == b {
        return S::zero();
    }
    let m = (a + b) / cast::<S>(2.0);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    adapt(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integrate over `[a, b]` splitting at the interior `kinks` so each panel
/// sees a smooth integrand.
pub fn integrate_with_kinks<S: Real, F: Fn(S) -> S>(f: &F, a: S, b: S, kinks: &[S], tol: S) -> S {
    let mut cuts: Vec<S> = kinks.iter().copied().filter(|&k| k > a && k < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);
    let per_panel_tol = tol / S::from_usize(nodes.len() - 1).unwrap();
    nodes
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], per_panel_tol))
        .sum()
}
