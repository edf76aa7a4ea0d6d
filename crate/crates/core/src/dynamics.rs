//! Independent verification of `ü + ∇V(u) = 0`: Störmer–Verlet integration,
//! residuals of sampled trajectories, and two closed-form oracles.
//!
//! * Repulsive Kepler: `m ẍ = δ x/|x|³`, conic `r(ζ) = |L|²/(|F|cos ζ − mδ)`
//!   with `|F|² = 2m|L|²H + m²δ²`. In the normalized form used by the
//!   integrator this is `V = (δ/m)/|x|` at specific energy `H/m`.
//! * Strong-force circle for `V = −|x|^{−α}`, `α > 2`:
//!   `r = ((α − 2)/(2H))^{1/α}`, `ω = (α r^{−(α+2)})^{1/2}`.

use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::potential::PotentialSpec;
use crate::rescale::{node_energy_residuals, OrbitSegment};
use crate::vecops::{norm, norm_sq};

/// A conservative force field `ẍ = −∇V(x)`.
pub trait Field {
    fn dimension(&self) -> usize;
    fn potential(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl Field for PotentialSpec {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn potential(&self, x: &[f64]) -> Result<f64> {
        self.eval_potential(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let g = self.eval_gradient(x)?;
        out.copy_from_slice(&g);
        Ok(())
    }
}

/// `V ≡ 0` (test mode).
#[derive(Clone, Copy, Debug)]
pub struct FreeParticle {
    pub dimension: usize,
}

impl Field for FreeParticle {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn potential(&self, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, _: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KeplerHyperbola {
    pub mass: f64,
    pub delta: f64,
    pub angular_momentum: f64,
    pub energy: f64,
    pub lenz_magnitude: f64,
    pub zeta_inf: f64,
}

impl KeplerHyperbola {
    pub fn new(mass: f64, delta: f64, angular_momentum: f64, energy: f64) -> Result<Self> {
        if !(mass > 0.0) || !(delta >= 0.0) || !(angular_momentum > 0.0) || !(energy > 0.0) {
            return Err(OrbitError::InvalidInput(
                "Kepler hyperbola needs m > 0, δ ≥ 0, |L| > 0, H > 0".into(),
            ));
        }
        let lenz = (2.0 * mass * angular_momentum.powi(2) * energy + (mass * delta).powi(2)).sqrt();
        Ok(Self {
            mass,
            delta,
            angular_momentum,
            energy,
            lenz_magnitude: lenz,
            zeta_inf: (mass * delta / lenz).acos(),
        })
    }

    /// `|F|² − (2m|L|²H + m²δ²)`, relative.
    pub fn lenz_identity_residual(&self) -> f64 {
        let rhs = 2.0 * self.mass * self.angular_momentum.powi(2) * self.energy + (self.mass * self.delta).powi(2);
        (self.lenz_magnitude.powi(2) - rhs).abs() / rhs
    }

    /// `r(ζ) = |L|²/(|F|cos ζ − mδ)` for `|ζ| < ζ∞`.
    pub fn radius(&self, zeta: f64) -> Result<f64> {
        let denom = self.lenz_magnitude * zeta.cos() - self.mass * self.delta;
        if zeta.abs() >= self.zeta_inf || !(denom > 0.0) {
            return Err(OrbitError::Divergence {
                zeta,
                zeta_inf: self.zeta_inf,
            });
        }
        Ok(self.angular_momentum.powi(2) / denom)
    }

    pub fn periapsis(&self) -> f64 {
        self.angular_momentum.powi(2) / (self.lenz_magnitude - self.mass * self.delta)
    }

    /// Normalized potential `V = (δ/m)/|x|` in `dimension` dimensions.
    /// `None` for `δ = 0` (free motion, use [`FreeParticle`]).
    pub fn field(&self, dimension: usize) -> Result<Option<PotentialSpec>> {
        if self.delta == 0.0 {
            return Ok(None);
        }
        PotentialSpec::power(1.0, dimension, self.delta / self.mass).map(Some)
    }

    /// Periapsis state `(x₀, v₀)`: position along the first axis, velocity
    /// along the second, so the polar angle equals `ζ`.
    pub fn periapsis_state(&self, dimension: usize) -> (Vec<f64>, Vec<f64>) {
        let rp = self.periapsis();
        let mut x = vec![0.0; dimension];
        let mut v = vec![0.0; dimension];
        x[0] = rp;
        v[1] = self.angular_momentum / (self.mass * rp);
        (x, v)
    }

    /// Angle between incoming and outgoing asymptotic velocities, `π − 2ζ∞`.
    pub fn scattering_angle(&self) -> f64 {
        std::f64::consts::PI - 2.0 * self.zeta_inf
    }
}

/// Conic radius; thin wrapper over [`KeplerHyperbola::radius`].
pub fn kepler_radius(h: &KeplerHyperbola, zeta: f64) -> Result<f64> {
    h.radius(zeta)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CircularOrbit {
    pub alpha: f64,
    pub energy: f64,
    pub radius: f64,
    pub omega: f64,
}

/// Circle `q(t) = r(cos ωt, sin ωt, 0, …)` solving `ü = ∇(|u|^{−α})`.
pub fn circular_oracle(alpha: f64, energy: f64) -> Result<CircularOrbit> {
    if !(alpha > 2.0) {
        return Err(OrbitError::InvalidInput(format!(
            "circular oracle requires alpha > 2, got {alpha}"
        )));
    }
    if !(energy > 0.0) {
        return Err(OrbitError::InvalidInput(format!(
            "circular oracle requires H > 0, got {energy}"
        )));
    }
    let radius = ((alpha - 2.0) / (2.0 * energy)).powf(1.0 / alpha);
    let omega = (alpha * radius.powf(-(alpha + 2.0))).sqrt();
    Ok(CircularOrbit {
        alpha,
        energy,
        radius,
        omega,
    })
}

impl CircularOrbit {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// The matching attractive spec `V = −|x|^{−α}`.
    pub fn field(&self, dimension: usize) -> Result<PotentialSpec> {
        PotentialSpec::attractive_power(self.alpha, dimension, 1.0)
    }

    /// Analytic `(u, u̇, ü)` at time `t`.
    pub fn state(&self, t: f64, dimension: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (s, c) = (self.omega * t).sin_cos();
        let (r, w) = (self.radius, self.omega);
        let mut x = vec![0.0; dimension];
        let mut v = vec![0.0; dimension];
        let mut a = vec![0.0; dimension];
        x[0] = r * c;
        x[1] = r * s;
        v[0] = -r * w * s;
        v[1] = r * w * c;
        a[0] = -r * w * w * c;
        a[1] = -r * w * w * s;
        (x, v, a)
    }

    /// `samples` nodes over `periods` periods with analytic velocities.
    pub fn segment(&self, samples: usize, periods: f64, dimension: usize) -> Result<OrbitSegment> {
        let spec = self.field(dimension)?;
        let t_end = periods * self.period();
        let times: Vec<f64> = (0..samples).map(|k| t_end * k as f64 / (samples - 1) as f64).collect();
        let (positions, velocities): (Vec<_>, Vec<_>) = times
            .iter()
            .map(|&t| {
                let (x, v, _) = self.state(t, dimension);
                (x, v)
            })
            .unzip();
        let energy_residuals = node_energy_residuals(&positions, &velocities, &spec, self.energy)?;
        Ok(OrbitSegment {
            period: self.period(),
            times,
            positions,
            velocities,
            energy_residuals,
            energy_h: self.energy,
            tstar_shift: 0.0,
            endpoint_radius: self.radius,
            period_sign_anomaly: false,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerletOptions {
    pub dt: f64,
    /// Below this the integrator aborts with a near-collision error.
    pub dt_min: f64,
    /// Step budget (cancellation).
    pub max_steps: usize,
    /// Keep every `record_stride`-th state (the final state is always kept).
    pub record_stride: usize,
    /// Stop once `|x|` reaches this radius.
    pub stop_radius: Option<f64>,
}

impl VerletOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            dt_min: dt * 1e-6,
            max_steps: 50_000_000,
            record_stride: 1,
            stop_radius: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub initial_energy: f64,
    /// Largest `|E(t) − E(0)|` over all steps (not just recorded ones).
    pub max_energy_drift: f64,
    pub steps: usize,
    pub halvings: usize,
    pub stopped_at_radius: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> (&[f64], &[f64]) {
        (self.positions.last().unwrap(), self.velocities.last().unwrap())
    }

    pub fn to_segment(&self, field: &dyn Field, energy: f64) -> Result<OrbitSegment> {
        let energy_residuals = self
            .positions
            .iter()
            .zip(&self.velocities)
            .map(|(x, v)| Ok((0.5 * norm_sq(v) + field.potential(x)? - energy).abs()))
            .collect::<Result<Vec<_>>>()?;
        let t0 = self.times[0];
        Ok(OrbitSegment {
            period: self.times.last().unwrap() - t0,
            times: self.times.clone(),
            positions: self.positions.clone(),
            velocities: self.velocities.clone(),
            energy_residuals,
            energy_h: energy,
            tstar_shift: 0.0,
            endpoint_radius: norm(&self.positions[0]),
            period_sign_anomaly: false,
        })
    }

    /// Linear interpolation of the recorded positions.
    pub fn position_at(&self, t: f64) -> Option<Vec<f64>> {
        let times = &self.times;
        if t < times[0] || t > *times.last()? {
            return None;
        }
        let k = times.partition_point(|&s| s <= t).min(times.len() - 1).max(1);
        let (t0, t1) = (times[k - 1], times[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(
            self.positions[k - 1]
                .iter()
                .zip(&self.positions[k])
                .map(|(a, b)| a + w * (b - a))
                .collect(),
        )
    }
}

/// Störmer–Verlet (kick–drift–kick) from `(x0, v0)` over `t_span`.
///
/// Near the origin (`|x| < 10·dt·|v|`) the step is halved locally until the
/// guard holds; a step below `dt_min` aborts with a near-collision error.
pub fn verlet_integrate(
    field: &dyn Field,
    x0: &[f64],
    v0: &[f64],
    t_span: (f64, f64),
    options: &VerletOptions,
) -> Result<Trajectory> {
    let dim = field.dimension();
    if x0.len() != dim || v0.len() != dim {
        return Err(OrbitError::InvalidInput("initial state has wrong dimension".into()));
    }
    if !(norm(x0) > 0.0) {
        return Err(OrbitError::Singularity);
    }
    if !(options.dt > 0.0) || !(options.dt_min > 0.0) || options.record_stride == 0 {
        return Err(OrbitError::InvalidInput(
            "dt, dt_min must be > 0 and record_stride >= 1".into(),
        ));
    }
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(OrbitError::InvalidInput("t_span must be increasing".into()));
    }
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut acc = vec![0.0; dim];
    field.gradient(&x, &mut acc)?;
    acc.iter_mut().for_each(|a| *a = -*a);
    let e0 = 0.5 * norm_sq(&v) + field.potential(&x)?;
    let mut t = t0;
    let mut traj = Trajectory {
        times: vec![t],
        positions: vec![x.clone()],
        velocities: vec![v.clone()],
        initial_energy: e0,
        max_energy_drift: 0.0,
        steps: 0,
        halvings: 0,
        stopped_at_radius: false,
    };
    let mut recorded_last = true;
    while t < t1 && traj.steps < options.max_steps {
        let mut h = options.dt.min(t1 - t);
        let speed = norm(&v);
        while norm(&x) < 10.0 * h * speed {
            h *= 0.5;
            traj.halvings += 1;
            if h < options.dt_min {
                return Err(OrbitError::NearCollision {
                    dt_min: options.dt_min,
                    time: t,
                });
            }
        }
        for k in 0..dim {
            v[k] += 0.5 * h * acc[k];
            x[k] += h * v[k];
        }
        if !(norm_sq(&x) > 0.0) {
            return Err(OrbitError::NearCollision {
                dt_min: options.dt_min,
                time: t,
            });
        }
        field.gradient(&x, &mut acc)?;
        for k in 0..dim {
            acc[k] = -acc[k];
            v[k] += 0.5 * h * acc[k];
        }
        t += h;
        traj.steps += 1;
        let e = 0.5 * norm_sq(&v) + field.potential(&x)?;
        traj.max_energy_drift = traj.max_energy_drift.max((e - e0).abs());
        recorded_last = false;
        if traj.steps.is_multiple_of(options.record_stride) {
            traj.times.push(t);
            traj.positions.push(x.clone());
            traj.velocities.push(v.clone());
            recorded_last = true;
        }
        if let Some(stop) = options.stop_radius {
            if norm(&x) >= stop {
                traj.stopped_at_radius = true;
                break;
            }
        }
    }
    if !recorded_last {
        traj.times.push(t);
        traj.positions.push(x);
        traj.velocities.push(v);
    }
    Ok(traj)
}

/// `max_j |ü_j + ∇V(u_j)| / max_j |∇V(u_j)|` over interior nodes, with the
/// three-point second difference on the (possibly non-uniform) time grid.
pub fn ode_residual(segment: &OrbitSegment, field: &dyn Field) -> Result<f64> {
    let m = segment.len();
    if m < 3 {
        return Err(OrbitError::InvalidInput("segment needs at least 3 nodes".into()));
    }
    let dim = segment.dimension();
    let mut grad = vec![0.0; dim];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for j in 1..m - 1 {
        let (tm, t, tp) = (segment.times[j - 1], segment.times[j], segment.times[j + 1]);
        let (hm, hp) = (t - tm, tp - t);
        let (um, u, up) = (
            &segment.positions[j - 1],
            &segment.positions[j],
            &segment.positions[j + 1],
        );
        field.gradient(u, &mut grad)?;
        let mut r2 = 0.0;
        for k in 0..dim {
            let acc = 2.0 * ((up[k] - u[k]) / hp - (u[k] - um[k]) / hm) / (hp + hm);
            r2 += (acc + grad[k]).powi(2);
        }
        worst = worst.max(r2.sqrt());
        scale = scale.max(norm(&grad));
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Largest `|½|u̇|² + V(u) − H|` over all nodes, using the segment's stored
/// velocities.
pub fn energy_residual(segment: &OrbitSegment, field: &dyn Field, energy: f64) -> Result<f64> {
    segment
        .positions
        .iter()
        .zip(&segment.velocities)
        .map(|(x, v)| Ok((0.5 * norm_sq(v) + field.potential(x)? - energy).abs()))
        .try_fold(0.0f64, |acc, r: Result<f64>| Ok(acc.max(r?)))
}

/// Re-integrates from the left boundary data of `segment` and measures the
/// sup distance on `[a, b]` relative to the segment's sup radius there.
#[derive(Clone, Debug, Serialize)]
pub struct ReintegrationCheck {
    pub window: (f64, f64),
    pub sup_distance: f64,
    pub sup_radius: f64,
    pub relative: f64,
    pub energy_drift: f64,
}

pub fn reintegrate_segment(
    segment: &OrbitSegment,
    field: &dyn Field,
    window: (f64, f64),
    dt: f64,
) -> Result<ReintegrationCheck> {
    let t0 = segment.times[0];
    let opts = VerletOptions {
        dt_min: dt * 1e-8,
        ..VerletOptions::new(dt)
    };
    let traj = verlet_integrate(
        field,
        &segment.positions[0],
        &segment.velocities[0],
        (t0, window.1),
        &opts,
    )?;
    let mut sup_d = 0.0f64;
    let mut sup_r = 0.0f64;
    for (t, p) in segment.times.iter().zip(&segment.positions) {
        if *t < window.0 || *t > window.1 {
            continue;
        }
        let q = traj
            .position_at(*t)
            .ok_or_else(|| OrbitError::InvalidInput("re-integration does not cover the window".into()))?;
        sup_d = sup_d.max(crate::vecops::dist(p, &q));
        sup_r = sup_r.max(norm(p));
    }
    Ok(ReintegrationCheck {
        window,
        sup_distance: sup_d,
        sup_radius: sup_r,
        relative: if sup_r > 0.0 { sup_d / sup_r } else { f64::INFINITY },
        energy_drift: traj.max_energy_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    #[test]
    fn kepler_reference_values() {
        let h = KeplerHyperbola::new(1.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(h.lenz_magnitude, SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(h.zeta_inf, FRAC_PI_4, max_relative = 1e-14);
        assert_relative_eq!(h.radius(0.0).unwrap(), 1.0 + SQRT_2, max_relative = 1e-14);
        assert!(h.radius(h.zeta_inf - 1e-6).unwrap() > 1e5);
        assert!(matches!(h.radius(h.zeta_inf), Err(OrbitError::Divergence { .. })));
        assert!(h.lenz_identity_residual() < 1e-12);
        assert!(h.lenz_magnitude > h.mass * h.delta);
    }

    #[test]
    fn kepler_without_coupling_is_a_line() {
        let h = KeplerHyperbola::new(1.0, 0.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(h.zeta_inf, std::f64::consts::FRAC_PI_2, max_relative = 1e-15);
        let z: f64 = 0.7;
        assert_relative_eq!(
            h.radius(z).unwrap(),
            1.0 / (h.lenz_magnitude * z.cos()),
            max_relative = 1e-14
        );
        assert!(h.field(2).unwrap().is_none());
    }

    #[test]
    fn circle_oracle_values() {
        let c = circular_oracle(4.0, 1.0).unwrap();
        assert_eq!(c.radius, 1.0);
        assert_eq!(c.omega, 2.0);
        assert!(circular_oracle(1.5, 1.0).is_err());
        let spec = c.field(2).unwrap();
        for k in 0..50 {
            let t = 0.137 * k as f64;
            let (x, v, a) = c.state(t, 2);
            let g = spec.eval_gradient(&x).unwrap();
            assert!((0..2).map(|i| (a[i] + g[i]).abs()).fold(0.0, f64::max) < 1e-9);
            let e = 0.5 * norm_sq(&v) + spec.eval_potential(&x).unwrap();
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn free_particle_moves_straight() {
        let f = FreeParticle { dimension: 2 };
        let tr = verlet_integrate(&f, &[1.0, 2.0], &[0.5, -0.25], (0.0, 8.0), &VerletOptions::new(0.125)).unwrap();
        let (x, v) = tr.final_state();
        assert_eq!(x, &[5.0, 0.0]);
        assert_eq!(v, &[0.5, -0.25]);
    }

    #[test]
    fn head_on_collision_aborts() {
        let spec = PotentialSpec::attractive_power(1.0, 2, 1.0).unwrap();
        let r = verlet_integrate(&spec, &[1.0, 0.0], &[-1.0, 0.0], (0.0, 10.0), &VerletOptions::new(1e-2));
        assert!(matches!(r, Err(OrbitError::NearCollision { .. })));
    }

    #[test]
    fn residuals_detect_wrong_paths() {
        let c = circular_oracle(4.0, 1.0).unwrap();
        let spec = c.field(2).unwrap();
        let seg = c.segment(10_000, 1.0, 2).unwrap();
        assert!(ode_residual(&seg, &spec).unwrap() < 1e-5);
        assert!(energy_residual(&seg, &spec, 1.0).unwrap() < 1e-10);
        let mut bad = seg.clone();
        for (k, p) in bad.positions.iter_mut().enumerate() {
            p[0] += 0.3 * ((k as f64) * 0.7).sin();
        }
        assert!(ode_residual(&bad, &spec).unwrap() > 0.1);
    }
}
