//! Feasible starting loops.
//!
//! The family `q_a(t) = R·e·cos^p(2πt) + a·η·sin^p(2πt)` with odd
//! `p = 2⌊2/α⌋ + 1` is antisymmetric and pinned for every amplitude `a > 0`.
//! `g(q_a)` tends to `+∞` as `a → 0` and to `0` as `a → ∞`, so a sign change of
//! `g(q_a) − H` can always be bracketed and bisected.

use log::debug;
use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::functional::eval_g;
use crate::potential::PotentialSpec;
use crate::symloop::SymmetricLoop;
use crate::vecops::{dot, first_orthogonal, norm};

pub const DEFAULT_BRACKET: (f64, f64) = (1e-3, 1e3);
pub const MAX_DOUBLINGS: usize = 60;
pub const MAX_BISECTIONS: usize = 200;
pub const SEED_TOL: f64 = 1e-10;

/// Odd exponent `p = 2⌊2/α⌋ + 1`.
pub fn seed_exponent(alpha: f64) -> i32 {
    2 * (2.0 / alpha).floor() as i32 + 1
}

/// Samples `q_a` on the half interval.
pub fn build_qa(radius: f64, e: &[f64], eta: &[f64], amplitude: f64, alpha: f64, n: usize) -> Result<SymmetricLoop> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(OrbitError::InvalidInput(format!(
            "amplitude must be > 0, got {amplitude}"
        )));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(OrbitError::InvalidInput(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    if e.len() != eta.len() {
        return Err(OrbitError::InvalidInput("e and eta differ in dimension".into()));
    }
    if (norm(eta) - 1.0).abs() > 1e-12 {
        return Err(OrbitError::DirectionNotUnit { norm: norm(eta) });
    }
    if dot(e, eta).abs() > 1e-12 {
        return Err(OrbitError::InvalidInput("e and eta are not orthogonal".into()));
    }
    let p = seed_exponent(alpha);
    let two_pi = 2.0 * std::f64::consts::PI;
    SymmetricLoop::from_fn(e.len(), n, radius, e, |t| {
        let c = (two_pi * t).cos().powi(p);
        let s = (two_pi * t).sin().powi(p);
        e.iter()
            .zip(eta)
            .map(|(ei, hi)| radius * ei * c + amplitude * hi * s)
            .collect()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedSolution {
    #[serde(skip)]
    pub seed: SymmetricLoop,
    pub amplitude: f64,
    pub g_value: f64,
    pub relative_residual: f64,
    pub bisections: usize,
    /// Bracket after auto-expansion.
    pub bracket: (f64, f64),
    pub expansions: usize,
    /// `(a, g(q_a))` at `a_lo·4^{−k}`, `k = 0..4`: must increase.
    pub small_amplitude_probe: Vec<(f64, f64)>,
    /// `(a, g(q_a))` at `a_hi·4^{k}`, `k = 0..4`: must decrease.
    pub large_amplitude_probe: Vec<(f64, f64)>,
    pub monotone_escape: bool,
}

/// Lands `q_a` on `g = H` by bisection in `log a`.
///
/// `bracket` defaults to `(1e−3, 1e3)` and is widened geometrically (at most
/// 60 doublings per side) until `g(q_{a_lo}) > H > g(q_{a_hi})`.
pub fn solve_seed(
    radius: f64,
    e: &[f64],
    energy: f64,
    spec: &PotentialSpec,
    n: usize,
    bracket: Option<(f64, f64)>,
) -> Result<SeedSolution> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(OrbitError::Precondition(format!("energy H must be > 0, got {energy}")));
    }
    spec.require_solver_hypotheses()?;
    if e.len() != spec.dimension {
        return Err(OrbitError::InvalidInput(
            "direction dimension differs from the spec".into(),
        ));
    }
    let eta = first_orthogonal(e);
    let g_at = |a: f64| -> Result<f64> { eval_g(&build_qa(radius, e, &eta, a, spec.alpha, n)?, spec) };

    let (mut lo, mut hi) = bracket.unwrap_or(DEFAULT_BRACKET);
    if !(lo > 0.0 && hi > lo) {
        return Err(OrbitError::InvalidInput(format!("bad bracket ({lo}, {hi})")));
    }
    let mut expansions = 0;
    let mut g_lo = g_at(lo)?;
    let mut k = 0;
    while g_lo <= energy {
        if k == MAX_DOUBLINGS {
            return Err(OrbitError::NoBracket { doublings: k });
        }
        lo *= 0.5;
        g_lo = g_at(lo)?;
        k += 1;
    }
    expansions += k;
    let mut g_hi = g_at(hi)?;
    k = 0;
    while g_hi >= energy {
        if k == MAX_DOUBLINGS {
            return Err(OrbitError::NoBracket { doublings: k });
        }
        hi *= 2.0;
        g_hi = g_at(hi)?;
        k += 1;
    }
    expansions += k;
    let bracket = (lo, hi);

    let small_amplitude_probe = (0..5)
        .map(|k| {
            let a = lo * 0.25f64.powi(k);
            g_at(a).map(|g| (a, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let large_amplitude_probe = (0..5)
        .map(|k| {
            let a = hi * 4f64.powi(k);
            g_at(a).map(|g| (a, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone_escape = small_amplitude_probe.windows(2).all(|w| w[1].1 > w[0].1)
        && large_amplitude_probe.windows(2).all(|w| w[1].1 < w[0].1);

    let tol = SEED_TOL * energy;
    let (mut a_lo, mut a_hi) = (lo, hi);
    let mut best = (f64::INFINITY, lo, g_lo);
    let mut bisections = 0;
    while bisections < MAX_BISECTIONS {
        let mid = (a_lo * a_hi).sqrt();
        let g_mid = g_at(mid)?;
        bisections += 1;
        let res = (g_mid - energy).abs();
        if res < best.0 {
            best = (res, mid, g_mid);
        }
        if res < tol {
            break;
        }
        if g_mid > energy {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
        if a_hi / a_lo - 1.0 < 4.0 * f64::EPSILON {
            break;
        }
    }
    let (res, a, g) = best;
    debug!("seed: a* = {a}, |g - H| = {res:e} after {bisections} bisections");
    if res >= tol {
        return Err(OrbitError::MaxIterations { iterations: bisections });
    }
    Ok(SeedSolution {
        seed: build_qa(radius, e, &eta, a, spec.alpha, n)?,
        amplitude: a,
        g_value: g,
        relative_residual: res / energy,
        bisections,
        bracket,
        expansions,
        small_amplitude_probe,
        large_amplitude_probe,
        monotone_escape,
    })
}

/// The sandwich `C₁(2−α)/2·∫|q|^{−α} ≤ g(q) ≤ C₂(2−α)/2·∫|q|^{−α}`, returned
/// as `(lower, g, upper)`.
pub fn constraint_sandwich(lp: &SymmetricLoop, spec: &PotentialSpec, sphere_samples: usize) -> Result<(f64, f64, f64)> {
    let (c1, c2) = spec.two_sided_bounds(sphere_samples)?;
    let alpha = spec.alpha;
    let inv = lp.integrate(spec, |_, x| Ok(norm(x).powf(-alpha)))?;
    let k = (2.0 - alpha) / 2.0;
    Ok((c1 * k * inv, eval_g(lp, spec)?, c2 * k * inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponent_uses_floor() {
        assert_eq!(seed_exponent(1.0), 5);
        assert_eq!(seed_exponent(1.9), 3);
        assert_eq!(seed_exponent(1.5), 3);
        assert_eq!(seed_exponent(0.5), 9);
    }

    #[test]
    fn quarter_node_is_amplitude_times_eta() {
        let lp = build_qa(3.0, &[1.0, 0.0], &[0.0, 1.0], 0.7, 1.0, 16).unwrap();
        let q = lp.node(8);
        assert!(q[0].abs() < 1e-15);
        assert_relative_eq!(q[1], 0.7, max_relative = 1e-15);
        assert_eq!(lp.node(0), &[3.0, 0.0]);
    }

    #[test]
    fn rejects_bad_pairs() {
        assert!(build_qa(1.0, &[1.0, 0.0], &[0.6, 0.8], 1.0, 1.0, 8).is_err());
        assert!(build_qa(1.0, &[1.0, 0.0], &[0.0, 1.0], 1.0, 2.0, 8).is_err());
        assert!(build_qa(1.0, &[1.0, 0.0], &[0.0, 1.0], -1.0, 1.0, 8).is_err());
    }

    #[test]
    fn seed_lands_on_constraint() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let s = solve_seed(1.0, &[1.0, 0.0], 1.0, &spec, 64, None).unwrap();
        assert!(s.relative_residual < 1e-10);
        let g = eval_g(&s.seed, &spec).unwrap();
        assert!((g - 1.0).abs() < 1e-10);
        assert!(s.monotone_escape);
        let s2 = solve_seed(1.0, &[1.0, 0.0], 2.0, &spec, 64, None).unwrap();
        assert!(s2.amplitude < s.amplitude);
    }

    #[test]
    fn nonpositive_energy_is_rejected() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        assert!(matches!(
            solve_seed(1.0, &[1.0, 0.0], 0.0, &spec, 64, None),
            Err(OrbitError::Precondition(_))
        ));
    }

    #[test]
    fn narrow_bracket_is_expanded() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let s = solve_seed(4.0, &[1.0, 0.0], 1.0, &spec, 64, Some((10.0, 20.0))).unwrap();
        assert!(s.expansions > 0);
        assert!(s.bracket.0 < 10.0);
        assert!(s.relative_residual < 1e-10);
    }
}
