//! The product functional `f(q) = ½∫|q̇|² · ∫(H − V(q))`, its negative `F`,
//! the constraint functional `g(q) = ∫(V + ½(∇V, q))`, and their gradients
//! with respect to the free (interior half-interval) nodes.
//!
//! Everything is a sum over the half interval: each stored node `q_j` stands
//! for itself and for its antisymmetric image `−q_j`, and the chain rule
//! through that image is applied explicitly.

use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::potential::PotentialSpec;
use crate::symloop::{dirichlet_of_half_nodes, SymmetricLoop};
use crate::vecops::norm_sq;

/// `|g − H|` beyond which `F` is reported as off the constraint set.
pub const OFF_CONSTRAINT_TOL: f64 = 1e-4;

/// One-pass evaluation of the discrete quantities on a half-node array.
#[derive(Clone, Debug)]
pub(crate) struct NodeEval {
    pub dirichlet: f64,
    /// `∫V`
    pub integral_v: f64,
    /// `g = ∫(V + ½(∇V, q))`
    pub g: f64,
    /// gradients with respect to interior nodes, `(n − 1) × N`
    pub grad_dirichlet: Vec<f64>,
    pub grad_integral_v: Vec<f64>,
    pub grad_g: Vec<f64>,
}

/// Evaluates the Dirichlet energy, `∫V`, `g` and (optionally) their free-node
/// gradients for half nodes `nodes` (`n + 1` rows of `dim`).
pub(crate) fn evaluate_nodes(spec: &PotentialSpec, nodes: &[f64], dim: usize, gradients: bool) -> Result<NodeEval> {
    let rows = nodes.len() / dim;
    let n = rows - 1;
    let dt = 1.0 / (2 * n) as f64;
    let homogeneous_factor = 1.0 - 0.5 * spec.alpha;

    let mut integral_v = 0.0;
    let mut g = 0.0;
    let mut neg = vec![0.0; dim];
    let mut gp = vec![0.0; dim];
    let mut gm = vec![0.0; dim];
    let free = if gradients { (n - 1) * dim } else { 0 };
    let mut grad_integral_v = vec![0.0; free];
    let mut grad_g = vec![0.0; free];

    for j in 0..n {
        let p = &nodes[j * dim..(j + 1) * dim];
        for (o, v) in neg.iter_mut().zip(p) {
            *o = -v;
        }
        let r2 = norm_sq(p);
        if !(r2 > 0.0) {
            return Err(OrbitError::Singularity);
        }
        let gp_val = spec.constraint_density(p, r2, &mut gp);
        let gm_val = spec.constraint_density(&neg, r2, &mut gm);
        integral_v += spec.potential_unchecked(p, r2) + spec.potential_unchecked(&neg, r2);
        g += gp_val + gm_val;
        if gradients && j >= 1 {
            let base = (j - 1) * dim;
            for k in 0..dim {
                // d/dq of V(q) + V(−q)
                let dv = gp[k] - gm[k];
                grad_integral_v[base + k] = dt * dv;
                // ∇(V + ½(∇V,x)) = (1 − α/2)∇V for (−α)-homogeneous V
                grad_g[base + k] = dt * homogeneous_factor * dv;
            }
        }
    }
    integral_v *= dt;
    g *= dt;

    let dirichlet = dirichlet_of_half_nodes(nodes, dim);
    let mut grad_dirichlet = vec![0.0; free];
    if gradients {
        let scale = 8.0 * n as f64;
        for j in 1..n {
            let base = (j - 1) * dim;
            for k in 0..dim {
                let c = nodes[j * dim + k];
                let l = nodes[(j - 1) * dim + k];
                let r = nodes[(j + 1) * dim + k];
                grad_dirichlet[base + k] = scale * (2.0 * c - l - r);
            }
        }
    }
    Ok(NodeEval {
        dirichlet,
        integral_v,
        g,
        grad_dirichlet,
        grad_integral_v,
        grad_g,
    })
}

/// `f = ½·D·(H − ∫V)` from its two factors.
pub fn product_functional(dirichlet: f64, integral_v: f64, energy: f64) -> f64 {
    0.5 * dirichlet * (energy - integral_v)
}

fn require_positive_energy(energy: f64) -> Result<()> {
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(OrbitError::Precondition(format!("energy H must be > 0, got {energy}")));
    }
    Ok(())
}

/// `f(q) = ½∫|q̇|² ∫(H − V)`.
pub fn eval_f(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<f64> {
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), false)?;
    Ok(product_functional(ev.dirichlet, ev.integral_v, energy))
}

/// `g(q) = ∫(V + ½(∇V, q))`.
pub fn eval_g(lp: &SymmetricLoop, spec: &PotentialSpec) -> Result<f64> {
    Ok(evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), false)?.g)
}

/// `F = −f`.
pub fn eval_big_f(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<f64> {
    Ok(-eval_f(lp, spec, energy)?)
}

/// Exact gradient of the discrete `F` with respect to the interior nodes.
pub fn grad_big_f_free_nodes(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<Vec<f64>> {
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), true)?;
    Ok(grad_big_f_from(&ev, energy))
}

pub(crate) fn grad_big_f_from(ev: &NodeEval, energy: f64) -> Vec<f64> {
    // F = −½ D (H − I)  ⇒  ∇F = −½(H − I)∇D + ½ D ∇I
    let a = -0.5 * (energy - ev.integral_v);
    let b = 0.5 * ev.dirichlet;
    ev.grad_dirichlet
        .iter()
        .zip(&ev.grad_integral_v)
        .map(|(gd, gi)| a * gd + b * gi)
        .collect()
}

/// `⟨f'(q), q⟩ = ∫|q̇|² · ∫(H − V − ½(∇V, q)) = D·(H − g)`.
pub fn pairing_f_prime_q(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<f64> {
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), false)?;
    Ok(ev.dirichlet * (energy - ev.g))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FunctionalReport {
    pub f_value: f64,
    #[serde(rename = "F_value")]
    pub big_f_value: f64,
    pub g_value: f64,
    /// `g − H`
    pub constraint_residual: f64,
    /// Euclidean norm of the free-node gradient of `F`.
    pub grad_norm: f64,
    #[serde(rename = "energy_H")]
    pub energy_h: f64,
    /// `|g − H| > 1e−4`: `F` is then evaluated off the constraint set.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub off_constraint: bool,
}

pub fn functional_report(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<FunctionalReport> {
    require_positive_energy(energy)?;
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), true)?;
    let f = product_functional(ev.dirichlet, ev.integral_v, energy);
    let grad = grad_big_f_from(&ev, energy);
    let residual = ev.g - energy;
    Ok(FunctionalReport {
        f_value: f,
        big_f_value: -f,
        g_value: ev.g,
        constraint_residual: residual,
        grad_norm: norm_sq(&grad).sqrt(),
        energy_h: energy,
        off_constraint: residual.abs() > OFF_CONSTRAINT_TOL,
    })
}

/// `F` on the constraint set via `F = αH/(2(2−α))·D`; agrees with
/// [`eval_big_f`] only when `g = H`.
pub fn big_f_on_constraint(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> f64 {
    spec.alpha * energy / (2.0 * (2.0 - spec.alpha)) * lp.dirichlet_energy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symloop::circle_loop;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn circle_values() {
        let r = 2.0;
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 512, r).unwrap();
        let h = 1.5;
        let f = eval_f(&c, &spec, h).unwrap();
        let exact = 2.0 * PI * PI * r * r * (h - 1.0 / r);
        assert!((f - exact).abs() / exact.abs() < 1e-4);
        assert_relative_eq!(eval_g(&c, &spec).unwrap(), 0.5 / r, max_relative = 1e-12);
        assert_relative_eq!(eval_big_f(&c, &spec, h).unwrap(), -f, max_relative = 1e-15);
    }

    #[test]
    fn zero_dirichlet_factor_gives_zero() {
        assert_eq!(product_functional(0.0, 3.0, 1.0), 0.0);
    }

    #[test]
    fn g_identity_on_homogeneous_potentials() {
        let spec = PotentialSpec::anisotropic(1.3, 3, 0.8, 0.4).unwrap();
        let lp = SymmetricLoop::from_fn(3, 32, 2.0, &[0.0, 0.0, 1.0], |t| {
            let th = 2.0 * PI * t;
            vec![0.3 * th.sin(), 1.1 * th.sin().powi(3), 2.0 * th.cos()]
        })
        .unwrap();
        let g = eval_g(&lp, &spec).unwrap();
        let iv = lp.integral_of_potential(&spec).unwrap();
        assert_relative_eq!(g, (1.0 - 0.65) * iv, max_relative = 1e-10);
    }

    #[test]
    fn report_flags_off_constraint() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 64, 1.0).unwrap();
        let rep = functional_report(&c, &spec, 3.0).unwrap();
        assert!(rep.off_constraint);
        assert_eq!(rep.big_f_value, -rep.f_value);
        let json = serde_json::to_value(&rep).unwrap();
        for key in [
            "f_value",
            "F_value",
            "g_value",
            "constraint_residual",
            "grad_norm",
            "energy_H",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(functional_report(&c, &spec, 0.0).is_err());
    }
}
