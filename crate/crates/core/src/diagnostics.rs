//! Measurable forms of the escape estimates, and the continuation sweep
//! `R → ∞`.
//!
//! The constants in the underlying estimates (upper radius bound `M`,
//! collision margin `m`, action offset, drift constants, …) are existential;
//! everything here estimates them from data and tests functional forms and
//! trends, never specific values.

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::minimize::{minimize_constrained, SolveStatus, SolverConfig};
use crate::potential::PotentialSpec;
use crate::rescale::{reconstruct_orbit, shift_by_tstar, OrbitSegment, SignPolicy};
use crate::seed::solve_seed;
use crate::vecops::{dist, dot, norm};

/// Slack on `ω ≤ 1` (Cauchy–Schwarz up to rounding).
pub const OMEGA_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct AngularDefect {
    /// `A = sqrt(|u|²|u̇|² − (u, u̇)²)`
    pub a: Vec<f64>,
    /// `ω = A/(|u||u̇|)`; `None` where `u̇ = 0`.
    pub omega: Vec<Option<f64>>,
    pub gaps: Vec<usize>,
}

pub fn angular_defect(segment: &OrbitSegment) -> Result<AngularDefect> {
    let mut a = Vec::with_capacity(segment.len());
    let mut omega = Vec::with_capacity(segment.len());
    let mut gaps = Vec::new();
    for (j, (u, v)) in segment.positions.iter().zip(&segment.velocities).enumerate() {
        let (ru, rv) = (norm(u), norm(v));
        if !(ru > 0.0) {
            return Err(OrbitError::Singularity);
        }
        let uv = dot(u, v);
        let val = ((ru * rv).powi(2) - uv * uv).max(0.0).sqrt();
        a.push(val);
        if rv > 0.0 {
            omega.push(Some(val / (ru * rv)));
        } else {
            omega.push(None);
            gaps.push(j);
        }
    }
    Ok(AngularDefect { a, omega, gaps })
}

/// Least-squares line `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).map(|f| f.slope)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn monotone(v: &[f64]) -> bool {
    strictly_increasing(v) || strictly_decreasing(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusBounds {
    /// `max_R min_t |u_R|`
    pub m_upper: f64,
    /// `min_R min_t |u_R|`
    pub m_lower: f64,
    pub ratio: f64,
    /// Relative change of `min_t |u_R|` per doubling of `R` (log–log fit).
    pub drift_per_doubling: f64,
    pub monotone: bool,
    pub pass: bool,
}

/// Band and drift test on `(R, min_t |u_R|)` pairs.
pub fn radius_bounds_sweep(entries: &[(f64, f64)]) -> Result<RadiusBounds> {
    if entries.len() < 4 {
        return Err(OrbitError::InsufficientEntries(format!(
            "need >= 4 entries, got {}",
            entries.len()
        )));
    }
    let rs: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let mins: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let span = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / rs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span >= 16.0) {
        return Err(OrbitError::InsufficientEntries(format!(
            "entries span only {span}x in R, need >= 16x"
        )));
    }
    let m_upper = mins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m_lower = mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let slope = log_log_slope(&rs, &mins).unwrap_or(f64::NAN);
    let drift = 2f64.powf(slope) - 1.0;
    let mono = monotone(&mins);
    let ratio = m_upper / m_lower;
    let pass = ratio < 10.0 && !(mono && drift.abs() > 0.1) && drift.is_finite();
    Ok(RadiusBounds {
        m_upper,
        m_lower,
        ratio,
        drift_per_doubling: drift,
        monotone: mono,
        pass,
    })
}

/// First and last times with `|u| ≤ L`, interpolated between nodes.
pub fn escape_margins(segment: &OrbitSegment, threshold: f64) -> Result<(f64, f64)> {
    let radii = segment.radii();
    let t = &segment.times;
    let inside: Vec<usize> = (0..radii.len()).filter(|&j| radii[j] <= threshold).collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return Err(OrbitError::ThresholdNotAttained { threshold });
    };
    let cross = |a: usize, b: usize| {
        let w = (radii[a] - threshold) / (radii[a] - radii[b]);
        t[a] + w * (t[b] - t[a])
    };
    let t_minus = if first == 0 { t[0] } else { cross(first - 1, first) };
    let t_plus = if last + 1 == radii.len() {
        t[last]
    } else {
        cross(last + 1, last)
    };
    Ok((t_minus, t_plus))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ActionIntegral {
    pub value: f64,
    /// Nodes where `H − V < 0`; the integrand is clipped to 0 there.
    pub clipped_nodes: usize,
}

/// `∫ √(H − V(u)) |u̇| dt`, trapezoid in arc length: `|u̇|dt = |du|`.
pub fn action_bound(segment: &OrbitSegment, spec: &PotentialSpec, energy: f64) -> Result<ActionIntegral> {
    let mut clipped = 0;
    let mut roots = Vec::with_capacity(segment.len());
    for p in &segment.positions {
        let d = energy - spec.eval_potential(p)?;
        if d < 0.0 {
            clipped += 1;
        }
        roots.push(d.max(0.0).sqrt());
    }
    let value = segment
        .positions
        .windows(2)
        .zip(roots.windows(2))
        .map(|(p, r)| 0.5 * (r[0] + r[1]) * dist(&p[0], &p[1]))
        .sum();
    Ok(ActionIntegral {
        value,
        clipped_nodes: clipped,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeTail {
    pub eta: f64,
    pub t0: f64,
    /// `|u(t₀)|`
    pub radius_t0: f64,
    /// `ω < η` on every node after `t₀`.
    pub omega_stays_below: bool,
    pub omega_max_after: f64,
    /// `d|u|/dt ≥ sqrt(1 − η²)|u̇|` on every node after `t₀`.
    pub radial_growth_holds: bool,
    /// `min (d|u|/dt) / sqrt(2(1 − η²)H)` after `t₀` (reported, not gated).
    pub radial_speed_ratio_min: f64,
    /// `sup_{t ≥ t₀} |u/|u| − e|`
    pub direction_error: f64,
}

/// Finds the trigger time `t₀` (first node with `|u| ≥ L_η`, `(u, u̇) > 0`,
/// `ω < η`) and measures the tail after it.
pub fn escape_tail(segment: &OrbitSegment, e: &[f64], eta: f64, l_eta: f64) -> Result<EscapeTail> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(OrbitError::InvalidInput(format!("eta must lie in (0, 1), got {eta}")));
    }
    let defect = angular_defect(segment)?;
    let energy = segment.energy_h;
    let k0 = (0..segment.len())
        .find(|&j| {
            let u = &segment.positions[j];
            let v = &segment.velocities[j];
            norm(u) >= l_eta && dot(u, v) > 0.0 && defect.omega[j].is_some_and(|w| w < eta)
        })
        .ok_or_else(|| {
            OrbitError::EscapeConditionsUnmet(format!("no node with |u| >= {l_eta}, (u,u') > 0 and omega < {eta}"))
        })?;
    let mut omega_max = 0.0f64;
    let mut radial_ok = true;
    let mut speed_ratio = f64::INFINITY;
    let mut dir_err = 0.0f64;
    let floor = (2.0 * (1.0 - eta * eta) * energy).sqrt();
    for j in k0..segment.len() {
        let u = &segment.positions[j];
        let v = &segment.velocities[j];
        if let Some(w) = defect.omega[j] {
            omega_max = omega_max.max(w);
        }
        let ru = norm(u);
        let radial_speed = dot(u, v) / ru;
        if radial_speed < (1.0 - eta * eta).sqrt() * norm(v) {
            radial_ok = false;
        }
        speed_ratio = speed_ratio.min(radial_speed / floor);
        let d: f64 = u.iter().zip(e).map(|(a, b)| (a / ru - b).powi(2)).sum::<f64>().sqrt();
        dir_err = dir_err.max(d);
    }
    Ok(EscapeTail {
        eta,
        t0: segment.times[k0],
        radius_t0: norm(&segment.positions[k0]),
        omega_stays_below: omega_max < eta,
        omega_max_after: omega_max,
        radial_growth_holds: radial_ok,
        radial_speed_ratio_min: speed_ratio,
        direction_error: dir_err,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftFit {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionReport {
    pub eta_grid: Vec<f64>,
    pub l_eta: f64,
    pub beta: f64,
    /// One row per segment, one column per `η` (`None`: conditions unmet).
    pub tails: Vec<Vec<Option<EscapeTail>>>,
    /// Tail direction error at the first `η`, per segment.
    pub direction_errors: Vec<Option<f64>>,
    /// Per-segment fit of `drift(η) ≈ c₁η + c₂|u(t₀)|^{−β}` over the grid.
    pub fits: Vec<Option<DriftFit>>,
    pub omega_stays_below: bool,
    pub errors_decreasing: bool,
    /// Every fitted constant within ±50% of its median.
    pub constants_stable: bool,
    pub pass: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn within_band(values: &[f64], band: f64) -> bool {
    if values.is_empty() {
        return false;
    }
    let mut v = values.to_vec();
    let med = median(&mut v);
    med != 0.0 && values.iter().all(|x| ((x - med) / med).abs() <= band)
}

/// Direction convergence across the ladder. Needs the decay parameters on
/// `spec` (it supplies `β`).
pub fn direction_convergence(
    spec: &PotentialSpec,
    segments: &[&OrbitSegment],
    e: &[f64],
    eta_grid: &[f64],
    l_eta: f64,
) -> Result<DirectionReport> {
    let decay = spec
        .decay
        .ok_or_else(|| OrbitError::Precondition("direction diagnostics need beta, m0, r0 on the spec".into()))?;
    if eta_grid.is_empty() {
        return Err(OrbitError::InvalidInput("empty eta grid".into()));
    }
    if let Some(bad) = eta_grid.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
        return Err(OrbitError::InvalidInput(format!("eta must lie in (0, 1), got {bad}")));
    }
    let beta = decay.beta;
    let tails: Vec<Vec<Option<EscapeTail>>> = segments
        .iter()
        .map(|s| eta_grid.iter().map(|&eta| escape_tail(s, e, eta, l_eta).ok()).collect())
        .collect();
    let direction_errors: Vec<Option<f64>> = tails
        .iter()
        .map(|row| row[0].as_ref().map(|t| t.direction_error))
        .collect();
    let fits: Vec<Option<DriftFit>> = tails
        .iter()
        .map(|row| {
            // normal equations for drift = c1·η + c2·ρ^{−β}
            let pts: Vec<(f64, f64, f64)> = row
                .iter()
                .flatten()
                .map(|t| (t.eta, t.radius_t0.powf(-beta), t.direction_error))
                .collect();
            if pts.len() < 2 {
                return None;
            }
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (x1, x2, y) in &pts {
                a11 += x1 * x1;
                a12 += x1 * x2;
                a22 += x2 * x2;
                b1 += x1 * y;
                b2 += x2 * y;
            }
            let det = a11 * a22 - a12 * a12;
            if det.abs() <= 1e-14 * a11 * a22 {
                return None;
            }
            Some(DriftFit {
                c1: (b1 * a22 - b2 * a12) / det,
                c2: (a11 * b2 - a12 * b1) / det,
            })
        })
        .collect();
    let omega_stays_below =
        tails.iter().flatten().flatten().all(|t| t.omega_stays_below) && tails.iter().all(|r| r[0].is_some());
    let errs: Option<Vec<f64>> = direction_errors.iter().cloned().collect();
    let errors_decreasing = errs.as_deref().is_some_and(|v| v.len() >= 2 && strictly_decreasing(v));
    let constants_stable = match fits.iter().cloned().collect::<Option<Vec<_>>>() {
        Some(f) if f.len() >= 2 => {
            within_band(&f.iter().map(|d| d.c1).collect::<Vec<_>>(), 0.5)
                && within_band(&f.iter().map(|d| d.c2).collect::<Vec<_>>(), 0.5)
        }
        _ => false,
    };
    Ok(DirectionReport {
        eta_grid: eta_grid.to_vec(),
        l_eta,
        beta,
        pass: omega_stays_below && errors_decreasing && constants_stable,
        tails,
        direction_errors,
        fits,
        omega_stays_below,
        errors_decreasing,
        constants_stable,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOptions {
    pub nodes: usize,
    pub solver: SolverConfig,
    /// Half-width `W` of the local-limit window.
    pub window: f64,
    /// Sample count on `[−W, W]`.
    pub window_samples: usize,
    /// `L` for the escape margins; `None`: `2·M_emp`, capped below `R₀/2`.
    pub escape_threshold: Option<f64>,
    /// `η` grid for the direction diagnostics (first entry is primary).
    pub eta_grid: Vec<f64>,
    /// `L_η`; `None`: the escape threshold.
    pub l_eta: Option<f64>,
    pub jobs: usize,
    pub sphere_samples: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            nodes: crate::symloop::DEFAULT_NODES,
            solver: SolverConfig::default(),
            window: 5.0,
            window_samples: 201,
            escape_threshold: None,
            eta_grid: vec![0.2, 0.3, 0.4, 0.5],
            l_eta: None,
            jobs: 1,
            sphere_samples: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationEntry {
    pub radius: f64,
    pub error: Option<String>,
    pub solve_status: Option<SolveStatus>,
    pub constraint_residual: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub multiplier: Option<f64>,
    pub dirichlet: Option<f64>,
    pub period: Option<f64>,
    pub min_radius: Option<f64>,
    /// Time (unshifted clock) of the deepest interior dip.
    pub min_radius_time: Option<f64>,
    pub action_integral: Option<f64>,
    pub action_clipped_nodes: Option<usize>,
    pub t_minus: Option<f64>,
    pub t_plus: Option<f64>,
    /// `T_R/2 − t₊`
    pub escape_margin: Option<f64>,
    pub tstar: Option<f64>,
    /// Shifted domain edges `−T/2 − t*`, `T/2 − t*`.
    pub shifted_edges: Option<(f64, f64)>,
    /// `|u*(−W)|`, `|u*(W)|` on the shifted clock.
    pub window_edge_radii: Option<(f64, f64)>,
    pub direction_error: Option<f64>,
    pub omega_max_after_escape: Option<f64>,
    pub max_speed: Option<f64>,
    pub max_interior_energy_residual: Option<f64>,
    pub collision_floor_active: bool,
    pub period_sign_anomaly: bool,
}

impl ContinuationEntry {
    fn failed(radius: f64, err: &OrbitError) -> Self {
        Self {
            radius,
            error: Some(err.to_string()),
            solve_status: None,
            constraint_residual: None,
            kkt_residual: None,
            multiplier: None,
            dirichlet: None,
            period: None,
            min_radius: None,
            min_radius_time: None,
            action_integral: None,
            action_clipped_nodes: None,
            t_minus: None,
            t_plus: None,
            escape_margin: None,
            tstar: None,
            shifted_edges: None,
            window_edge_radii: None,
            direction_error: None,
            omega_max_after_escape: None,
            max_speed: None,
            max_interior_energy_residual: None,
            collision_floor_active: false,
            period_sign_anomaly: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitReport {
    pub window: f64,
    /// `sup_{|t| ≤ W} |u*_{k+1}(t) − u*_k(t)|` for consecutive entries.
    pub consecutive_distances: Vec<Option<f64>>,
    pub distances_decreasing: bool,
    /// Last distance below half the first.
    pub halving: bool,
    /// `|u*|` at the time-domain edges of the largest-R trajectory.
    pub largest_edge_radii: Option<(f64, f64)>,
    pub edge_radii_exceed: bool,
    /// `min(|u*(±W)|)` non-decreasing along the ladder.
    pub window_edges_growing: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepVerdicts {
    pub radius_band: bool,
    pub margins_increasing: bool,
    pub margins_unbounded: bool,
    /// Affine fit `I_R ≈ s·R + b`.
    pub action_slope: Option<f64>,
    pub action_slope_in_range: bool,
    pub action_slope_range: (f64, f64),
    pub margin_slope: Option<f64>,
    /// Lower bound on the margin slope from the escape-time estimate.
    pub margin_slope_bound: Option<f64>,
    pub period_growth_slope: Option<f64>,
    pub speed_capped: bool,
    pub local_limit: bool,
    pub hyperbolicity: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub schema: u32,
    pub alpha: f64,
    pub energy_h: f64,
    pub direction: Vec<f64>,
    pub nodes: usize,
    pub entries: Vec<ContinuationEntry>,
    pub radius_bounds: Option<RadiusBounds>,
    pub m_emp: Option<f64>,
    pub escape_threshold: Option<f64>,
    pub local_limit: LocalLimitReport,
    pub direction_report: Option<DirectionReport>,
    pub verdicts: SweepVerdicts,
    #[serde(skip)]
    pub segments: Vec<Option<OrbitSegment>>,
}

struct RunOutput {
    segment: OrbitSegment,
    status: SolveStatus,
    constraint_residual: f64,
    kkt_residual: f64,
    multiplier: f64,
    dirichlet: f64,
    floor_active: bool,
}

fn run_one(spec: &PotentialSpec, energy: f64, e: &[f64], radius: f64, opts: &SweepOptions) -> Result<RunOutput> {
    let seed = solve_seed(radius, e, energy, spec, opts.nodes, None)?;
    let sol = minimize_constrained(&seed.seed, spec, energy, &opts.solver)?;
    let segment = reconstruct_orbit(&sol.minimizer, spec, energy, SignPolicy::Magnitude)?;
    let r = &sol.report;
    Ok(RunOutput {
        segment,
        status: r.status,
        constraint_residual: r.constraint_residual,
        kkt_residual: r.kkt_residual,
        multiplier: r.multiplier,
        dirichlet: r.dirichlet,
        floor_active: r.collision_floor_active,
    })
}

/// seed → minimize → rescale per `R`, then every diagnostic over the ladder.
/// A stage error is recorded on its entry and the sweep continues.
pub fn continuation_sweep(
    spec: &PotentialSpec,
    energy: f64,
    e: &[f64],
    schedule: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if schedule.len() < 4 {
        return Err(OrbitError::InsufficientEntries(format!(
            "schedule needs >= 4 radii, got {}",
            schedule.len()
        )));
    }
    if !strictly_increasing(schedule) || !(schedule[0] > 0.0) {
        return Err(OrbitError::InvalidInput(
            "R schedule must be positive and strictly increasing".into(),
        ));
    }
    spec.require_solver_hypotheses()?;
    if !(energy > 0.0) {
        return Err(OrbitError::Precondition(format!("energy H must be > 0, got {energy}")));
    }
    if !(opts.window > 0.0) || opts.window_samples < 2 {
        return Err(OrbitError::InvalidInput("window must be > 0 with >= 2 samples".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| OrbitError::InvalidInput(e.to_string()))?;
    let runs: Vec<Result<RunOutput>> = pool.install(|| {
        schedule
            .par_iter()
            .map(|&r| {
                let out = run_one(spec, energy, e, r, opts);
                match &out {
                    Ok(o) => info!("R = {r}: {:?}, T = {:.6}", o.status, o.segment.period),
                    Err(err) => warn!("R = {r}: {err}"),
                }
                out
            })
            .collect()
    });

    let mut entries = Vec::with_capacity(schedule.len());
    let mut segments: Vec<Option<OrbitSegment>> = Vec::with_capacity(schedule.len());
    for (&r, run) in schedule.iter().zip(runs) {
        match run {
            Ok(o) => {
                let radii = o.segment.radii();
                let (kmin, &rmin) = radii
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("segments are non-empty");
                let action = action_bound(&o.segment, spec, energy)?;
                let max_speed = o.segment.velocities.iter().map(|v| norm(v)).fold(0.0, f64::max);
                let mut entry = ContinuationEntry::failed(r, &OrbitError::InvalidInput(String::new()));
                entry.error = match o.status {
                    SolveStatus::Converged => None,
                    s => Some(format!("solver status {s:?}")),
                };
                entry.solve_status = Some(o.status);
                entry.constraint_residual = Some(o.constraint_residual);
                entry.kkt_residual = Some(o.kkt_residual);
                entry.multiplier = Some(o.multiplier);
                entry.dirichlet = Some(o.dirichlet);
                entry.period = Some(o.segment.period);
                entry.min_radius = Some(rmin);
                entry.min_radius_time = Some(o.segment.times[kmin]);
                entry.action_integral = Some(action.value);
                entry.action_clipped_nodes = Some(action.clipped_nodes);
                entry.max_speed = Some(max_speed);
                entry.max_interior_energy_residual = Some(o.segment.max_interior_energy_residual());
                entry.collision_floor_active = o.floor_active;
                entry.period_sign_anomaly = o.segment.period_sign_anomaly;
                entries.push(entry);
                segments.push(Some(o.segment));
            }
            Err(err) => {
                entries.push(ContinuationEntry::failed(r, &err));
                segments.push(None);
            }
        }
    }

    let pairs: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.min_radius.map(|m| (e.radius, m)))
        .collect();
    let radius_bounds = radius_bounds_sweep(&pairs).ok();
    let m_emp = pairs
        .iter()
        .map(|p| p.1)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let escape_threshold = opts
        .escape_threshold
        .or_else(|| m_emp.map(|m| (2.0 * m).min(0.5 * schedule[0])));

    // escape margins, t* shift, window samples
    let mut shifted: Vec<Option<OrbitSegment>> = Vec::with_capacity(segments.len());
    for (entry, seg) in entries.iter_mut().zip(&segments) {
        let Some(seg) = seg else {
            shifted.push(None);
            continue;
        };
        if let Some(l) = escape_threshold {
            if let Ok((tm, tp)) = escape_margins(seg, l) {
                entry.t_minus = Some(tm);
                entry.t_plus = Some(tp);
                entry.escape_margin = Some(seg.times[seg.len() - 1] - tp);
            }
        }
        let s = m_emp.and_then(|m| shift_by_tstar(seg, m).ok());
        if let Some(s) = &s {
            entry.tstar = Some(s.tstar_shift);
            entry.shifted_edges = Some((s.times[0], s.times[s.len() - 1]));
            entry.window_edge_radii = match (s.position_at(-opts.window), s.position_at(opts.window)) {
                (Some(a), Some(b)) => Some((norm(&a), norm(&b))),
                _ => None,
            };
        }
        shifted.push(s);
    }

    // local-limit (Cauchy) proxy on [−W, W]
    let grid: Vec<f64> = (0..opts.window_samples)
        .map(|k| -opts.window + 2.0 * opts.window * k as f64 / (opts.window_samples - 1) as f64)
        .collect();
    let consecutive_distances: Vec<Option<f64>> = shifted
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => grid.iter().try_fold(0.0f64, |acc, &t| {
                let (pa, pb) = (a.position_at(t)?, b.position_at(t)?);
                Some(acc.max(dist(&pa, &pb)))
            }),
            _ => None,
        })
        .collect();
    let dists: Option<Vec<f64>> = consecutive_distances.iter().cloned().collect();
    let distances_decreasing = dists
        .as_deref()
        .is_some_and(|d| !d.is_empty() && strictly_decreasing(d));
    let halving = dists
        .as_deref()
        .is_some_and(|d| d.len() >= 2 && d[d.len() - 1] < 0.5 * d[0]);
    let largest_edge_radii = shifted
        .last()
        .and_then(|s| s.as_ref())
        .map(|s| (norm(&s.positions[0]), norm(&s.positions[s.len() - 1])));
    let edge_radii_exceed = match (largest_edge_radii, m_emp) {
        (Some((a, b)), Some(m)) => a.min(b) > 10.0 * m,
        _ => false,
    };
    let window_edge_mins: Option<Vec<f64>> = entries
        .iter()
        .map(|e| e.window_edge_radii.map(|(a, b)| a.min(b)))
        .collect();
    let window_edges_growing = window_edge_mins
        .as_deref()
        .is_some_and(|v| v.windows(2).all(|w| w[1] >= w[0]));
    let local_limit = LocalLimitReport {
        window: opts.window,
        pass: distances_decreasing && edge_radii_exceed && window_edges_growing,
        consecutive_distances,
        distances_decreasing,
        halving,
        largest_edge_radii,
        edge_radii_exceed,
        window_edges_growing,
    };

    // direction diagnostics (needs decay data on the spec)
    let direction = if spec.decay.is_some() {
        let segs: Vec<&OrbitSegment> = segments.iter().flatten().collect();
        let l_eta = opts.l_eta.or(escape_threshold).unwrap_or(1.0);
        let report = direction_convergence(spec, &segs, e, &opts.eta_grid, l_eta)?;
        let mut k = 0;
        for (entry, seg) in entries.iter_mut().zip(&segments) {
            if seg.is_some() {
                if let Some(t) = &report.tails[k][0] {
                    entry.direction_error = Some(t.direction_error);
                    entry.omega_max_after_escape = Some(t.omega_max_after);
                }
                k += 1;
            }
        }
        Some(report)
    } else {
        None
    };

    // sweep-level verdicts
    let ok: Vec<&ContinuationEntry> = entries.iter().filter(|e| e.period.is_some()).collect();
    let margins: Option<Vec<f64>> = entries.iter().map(|e| e.escape_margin).collect();
    let margins_increasing = margins.as_deref().is_some_and(strictly_increasing);
    let margins_unbounded = margins.as_deref().is_some_and(|m| {
        m.len() >= 2
            && m[0] > 0.0
            && m[m.len() - 1] > 2.0 * m[0]
            && log_log_slope(&schedule[..m.len()], m).is_some_and(|s| s > 0.0)
    });
    let rs: Vec<f64> = ok.iter().map(|e| e.radius).collect();
    let actions: Vec<f64> = ok.iter().filter_map(|e| e.action_integral).collect();
    let action_slope = fit_line(&rs, &actions).map(|f| f.slope);
    let action_slope_range = (0.9 * (2.0 * energy).sqrt(), 1.05 * 2.0 * energy.sqrt());
    let action_slope_in_range = action_slope.is_some_and(|s| s >= action_slope_range.0 && s <= action_slope_range.1);
    let margin_slope = match (&margins, escape_threshold) {
        (Some(m), Some(l)) => fit_line(&schedule.iter().map(|r| r - l).collect::<Vec<_>>(), m).map(|f| f.slope),
        _ => None,
    };
    let margin_slope_bound = m_emp.and_then(|_| {
        let m_low = radius_bounds.as_ref()?.m_lower;
        let (_, c2) = spec.two_sided_bounds(opts.sphere_samples.max(spec.dimension)).ok()?;
        let d = 0.5 * (1.0f64).min(energy * m_low.powf(spec.alpha) / c2);
        let inner = energy - d * c2 / m_low.powf(spec.alpha);
        (inner > 0.0).then(|| inner.sqrt() / (2f64.sqrt() * energy))
    });
    let periods: Vec<f64> = ok.iter().filter_map(|e| e.period).collect();
    let period_growth_slope = fit_line(&rs, &periods).map(|f| f.slope);
    let speed_capped = ok
        .iter()
        .all(|e| e.max_speed.is_some_and(|s| s <= (2.0 * energy).sqrt() + 1e-6));
    let radius_band = radius_bounds.as_ref().is_some_and(|b| b.pass);
    let hyperbolicity = radius_band && margins_increasing && action_slope_in_range && local_limit.pass;
    let verdicts = SweepVerdicts {
        radius_band,
        margins_increasing,
        margins_unbounded,
        action_slope,
        action_slope_in_range,
        action_slope_range,
        margin_slope,
        margin_slope_bound,
        period_growth_slope,
        speed_capped,
        local_limit: local_limit.pass,
        hyperbolicity,
    };

    Ok(SweepResult {
        schema: crate::json::SCHEMA_VERSION,
        alpha: spec.alpha,
        energy_h: energy,
        direction: e.to_vec(),
        nodes: opts.nodes,
        entries,
        radius_bounds,
        m_emp,
        escape_threshold,
        local_limit,
        direction_report: direction,
        verdicts,
        segments,
    })
}

/// Geometric ladder `R₀·2^k`, `k = 0..=doublings`.
pub fn geometric_schedule(r0: f64, doublings: usize) -> Vec<f64> {
    (0..=doublings).map(|k| r0 * 2f64.powi(k as i32)).collect()
}
