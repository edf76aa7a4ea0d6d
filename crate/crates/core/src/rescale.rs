//! From the unit-interval minimizer to a true-time trajectory.
//!
//! A critical loop `q` on `[0, 1]` becomes `u(t) = q((t + T/2)/T)` on
//! `[−T/2, T/2]` with `T² = ½∫|q̇|² / ∫(H − V(q))`.
//!
//! On the constraint set `g = H` a (−α)-homogeneous potential has
//! `∫V = 2H/(2 − α) > H`, so the denominator above is negative there. The
//! default policy takes its magnitude and raises `period_sign_anomaly`; the
//! strict policy refuses. Either way the sign is never hidden.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::functional::evaluate_nodes;
use crate::potential::PotentialSpec;
use crate::symloop::{fmt_f64, SymmetricLoop};
use crate::vecops::{dist, norm, norm_sq};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPolicy {
    /// Use `|∫(H − V)|` and flag a negative denominator.
    #[default]
    Magnitude,
    /// Error on a nonpositive denominator.
    Strict,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PeriodEstimate {
    pub period: f64,
    /// `½∫|q̇|²`
    pub numerator: f64,
    /// `∫(H − V)`, signed
    pub denominator: f64,
    pub period_sign_anomaly: bool,
}

/// Period of the rescaled orbit.
pub fn compute_period(
    lp: &SymmetricLoop,
    spec: &PotentialSpec,
    energy: f64,
    policy: SignPolicy,
) -> Result<PeriodEstimate> {
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), false)?;
    let numerator = 0.5 * ev.dirichlet;
    let denominator = energy - ev.integral_v;
    let anomaly = denominator < 0.0;
    if denominator == 0.0 || !denominator.is_finite() || (anomaly && policy == SignPolicy::Strict) {
        return Err(OrbitError::RescaleImpossible(format!(
            "∫(H − V) = {denominator:e} is not positive"
        )));
    }
    if !(numerator > 0.0) {
        return Err(OrbitError::RescaleImpossible(
            "constant loop has zero kinetic term".into(),
        ));
    }
    Ok(PeriodEstimate {
        period: (numerator / denominator.abs()).sqrt(),
        numerator,
        denominator,
        period_sign_anomaly: anomaly,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitSegment {
    pub period: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// `|½|u̇|² + V(u) − H|` per node.
    pub energy_residuals: Vec<f64>,
    pub energy_h: f64,
    /// `t*` of the last shift (0 when unshifted); `times` are already
    /// translated by `−t*`.
    pub tstar_shift: f64,
    pub endpoint_radius: f64,
    pub period_sign_anomaly: bool,
}

#[derive(Serialize)]
struct SegmentMeta {
    schema: u32,
    period: f64,
    endpoint_radius: f64,
    energy_h: f64,
    tstar_shift: f64,
    nodes: usize,
    max_interior_energy_residual: f64,
    period_sign_anomaly: bool,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn radii(&self) -> Vec<f64> {
        self.positions.iter().map(|p| norm(p)).collect()
    }

    pub fn min_radius(&self) -> f64 {
        self.radii().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Largest energy residual over interior nodes.
    pub fn max_interior_energy_residual(&self) -> f64 {
        let m = self.energy_residuals.len();
        if m < 3 {
            return 0.0;
        }
        self.energy_residuals[1..m - 1].iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `∫|u̇|² dt` with the piecewise-linear (segment) velocities; for a
    /// reconstructed loop this is exactly `∫|q̇|²/T`.
    pub fn kinetic_integral(&self) -> f64 {
        self.positions
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(p, t)| dist(&p[1], &p[0]).powi(2) / (t[1] - t[0]))
            .sum()
    }

    /// Position at time `t` by linear interpolation (`None` outside the
    /// time domain).
    pub fn position_at(&self, t: f64) -> Option<Vec<f64>> {
        let times = &self.times;
        if times.is_empty() || t < times[0] || t > *times.last().unwrap() {
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

    /// CSV rows `t, x1..xN, v1..vN, energy_residual`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.dimension();
        let mut s = String::new();
        let xs: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        let vs: Vec<String> = (1..=dim).map(|k| format!("v{k}")).collect();
        writeln!(s, "t,{},{},energy_residual", xs.join(","), vs.join(",")).unwrap();
        for i in 0..self.len() {
            s.push_str(&fmt_f64(self.times[i]));
            for v in self.positions[i].iter().chain(&self.velocities[i]) {
                s.push(',');
                s.push_str(&fmt_f64(*v));
            }
            s.push(',');
            s.push_str(&fmt_f64(self.energy_residuals[i]));
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// JSON sidecar with the scalar metadata.
    pub fn metadata_json(&self) -> String {
        crate::json::to_json(&SegmentMeta {
            schema: crate::json::SCHEMA_VERSION,
            period: self.period,
            endpoint_radius: self.endpoint_radius,
            energy_h: self.energy_h,
            tstar_shift: self.tstar_shift,
            nodes: self.len(),
            max_interior_energy_residual: self.max_interior_energy_residual(),
            period_sign_anomaly: self.period_sign_anomaly,
        })
    }
}

/// Per-node `|½|v|² + V(x) − H|`.
pub fn node_energy_residuals(
    positions: &[Vec<f64>],
    velocities: &[Vec<f64>],
    spec: &PotentialSpec,
    energy: f64,
) -> Result<Vec<f64>> {
    positions
        .iter()
        .zip(velocities)
        .map(|(x, v)| Ok((0.5 * norm_sq(v) + spec.eval_potential(x)? - energy).abs()))
        .collect()
}

/// `u(t) = q((t + T/2)/T)` on the `2n + 1` full-trace nodes. Velocities are
/// central differences of the periodic loop divided by `T`.
pub fn reconstruct_orbit(
    lp: &SymmetricLoop,
    spec: &PotentialSpec,
    energy: f64,
    policy: SignPolicy,
) -> Result<OrbitSegment> {
    let est = compute_period(lp, spec, energy, policy)?;
    let t_period = est.period;
    let trace = lp.full_trace();
    let m = trace.len() - 1; // 2n
    let ds = 1.0 / m as f64;
    let times: Vec<f64> = (0..=m).map(|j| -0.5 * t_period + j as f64 * ds * t_period).collect();
    let velocities: Vec<Vec<f64>> = (0..=m)
        .map(|j| {
            let prev = if j == 0 { &trace[m - 1] } else { &trace[j - 1] };
            let next = if j == m { &trace[1] } else { &trace[j + 1] };
            next.iter()
                .zip(prev)
                .map(|(a, b)| (a - b) / (2.0 * ds * t_period))
                .collect()
        })
        .collect();
    let energy_residuals = node_energy_residuals(&trace, &velocities, spec, energy)?;
    Ok(OrbitSegment {
        period: t_period,
        times,
        positions: trace,
        velocities,
        energy_residuals,
        energy_h: energy,
        tstar_shift: 0.0,
        endpoint_radius: lp.radius(),
        period_sign_anomaly: est.period_sign_anomaly,
    })
}

/// First time `|u| = M` (linear interpolation between nodes).
pub fn first_crossing(segment: &OrbitSegment, threshold: f64) -> Result<f64> {
    let radii = segment.radii();
    if radii.is_empty() {
        return Err(OrbitError::InvalidInput("empty segment".into()));
    }
    if radii[0] <= threshold {
        return Ok(segment.times[0]);
    }
    for k in 1..radii.len() {
        if radii[k] <= threshold {
            let (r0, r1) = (radii[k - 1], radii[k]);
            let w = (r0 - threshold) / (r0 - r1);
            let (t0, t1) = (segment.times[k - 1], segment.times[k]);
            return Ok(t0 + w * (t1 - t0));
        }
    }
    Err(OrbitError::ThresholdNotAttained { threshold })
}

/// Translates time so the first crossing of `|u| = M` sits at `t = 0`.
/// The domain becomes `[−T/2 − t*, T/2 − t*]` (in the unshifted clock).
pub fn shift_by_tstar(segment: &OrbitSegment, threshold: f64) -> Result<OrbitSegment> {
    if !(threshold > 0.0) {
        return Err(OrbitError::InvalidInput(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    if threshold > segment.endpoint_radius * (1.0 + 1e-12) {
        return Err(OrbitError::InvalidInput(format!(
            "threshold {threshold} exceeds the endpoint radius {}",
            segment.endpoint_radius
        )));
    }
    let tstar = first_crossing(segment, threshold)?;
    let mut out = segment.clone();
    for t in out.times.iter_mut() {
        *t -= tstar;
    }
    out.tstar_shift = segment.tstar_shift + tstar;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symloop::circle_loop;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn attractive_circle_period() {
        let spec = PotentialSpec::attractive_power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 512, 2.0).unwrap();
        let h = 0.3;
        let est = compute_period(&c, &spec, h, SignPolicy::Strict).unwrap();
        let exact = (2.0 * PI * PI * 4.0 / (h + 0.5)).sqrt();
        assert!((est.period - exact).abs() / exact < 1e-4);
        assert!(!est.period_sign_anomaly);
    }

    #[test]
    fn strong_force_circle_frequency() {
        let spec = PotentialSpec::attractive_power(4.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 2048, 1.0).unwrap();
        let est = compute_period(&c, &spec, 1.0, SignPolicy::Strict).unwrap();
        assert!((2.0 * PI / est.period - 2.0).abs() < 1e-5);
    }

    #[test]
    fn negative_denominator_policies() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 64, 1.0).unwrap();
        assert!(matches!(
            compute_period(&c, &spec, 0.5, SignPolicy::Strict),
            Err(OrbitError::RescaleImpossible(_))
        ));
        let est = compute_period(&c, &spec, 0.5, SignPolicy::Magnitude).unwrap();
        assert!(est.period_sign_anomaly);
        assert!(est.denominator < 0.0);
    }

    #[test]
    fn reconstruction_basics() {
        let spec = PotentialSpec::attractive_power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 256, 1.0).unwrap();
        let seg = reconstruct_orbit(&c, &spec, 1.0, SignPolicy::Strict).unwrap();
        assert_eq!(seg.len(), 513);
        assert_relative_eq!(seg.times[0], -seg.period / 2.0, max_relative = 1e-15);
        assert_relative_eq!(*seg.times.last().unwrap(), seg.period / 2.0, max_relative = 1e-12);
        assert_relative_eq!(norm(&seg.positions[0]), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            seg.kinetic_integral(),
            c.dirichlet_energy() / seg.period,
            max_relative = 1e-10
        );
        for j in 0..256 {
            assert_relative_eq!(seg.positions[j + 256][0], -seg.positions[j][0], epsilon = 1e-15);
        }
    }

    #[test]
    fn tstar_shift_edges() {
        let spec = PotentialSpec::attractive_power(1.0, 2, 1.0).unwrap();
        let c = circle_loop(2, 64, 1.0).unwrap();
        let seg = reconstruct_orbit(&c, &spec, 1.0, SignPolicy::Strict).unwrap();
        let s = shift_by_tstar(&seg, 1.0).unwrap();
        assert_eq!(s.tstar_shift, -seg.period / 2.0);
        assert_eq!(s.times[0], 0.0);
        assert!(matches!(
            shift_by_tstar(&seg, 0.5),
            Err(OrbitError::ThresholdNotAttained { .. })
        ));
        assert!(shift_by_tstar(&seg, 2.0).is_err());
    }
}
