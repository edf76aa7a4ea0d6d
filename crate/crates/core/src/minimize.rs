//! Constrained minimization of the Dirichlet energy on `{g = H}`.
//!
//! On the constraint set `F = αH/(2(2−α))·∫|q̇|²`, so minimizing `F` there is
//! the same as minimizing the Dirichlet energy subject to `g(q) = H`. The
//! solver is an augmented Lagrangian method; each subproblem is solved by
//! L-BFGS with backtracking (Armijo) line search, preconditioned by the exact
//! Dirichlet Hessian `8n·tridiag(−1, 2, −1)`.
//!
//! A hard collision floor is enforced inside the line search: trial points
//! with a node below the floor are rejected. Whether the floor was ever hit is
//! reported, and the final loop's minimum radius is recorded as a certificate.

use std::collections::VecDeque;

use log::{debug, trace};
use serde::Serialize;

use crate::error::{OrbitError, Result};
use crate::functional::{evaluate_nodes, functional_report, FunctionalReport, NodeEval};
use crate::potential::PotentialSpec;
use crate::symloop::SymmetricLoop;
use crate::vecops::{dot, norm, norm_sq};

#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    /// Target for the relative projected KKT residual.
    pub tol_kkt: f64,
    /// Target for `|g − H|/H`.
    pub tol_constraint: f64,
    pub max_outer: usize,
    /// L-BFGS iterations per outer step; the Newton polish finishes the job.
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Absolute floor on `|q_j|`; `None` means `1e−6·R`.
    pub collision_floor: Option<f64>,
    pub line_search_shrink: f64,
    pub sufficient_decrease: f64,
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            tol_constraint: 1e-9,
            max_outer: 50,
            max_inner: 300,
            penalty_init: 10.0,
            penalty_growth: 5.0,
            collision_floor: None,
            line_search_shrink: 0.5,
            sufficient_decrease: 1e-4,
            memory: 12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tol_kkt,
            self.tol_constraint,
            self.penalty_init,
            self.sufficient_decrease,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(OrbitError::InvalidInput("solver tolerances must be > 0".into()));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(OrbitError::InvalidInput("penalty_growth must be > 1".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(OrbitError::InvalidInput("line_search_shrink must lie in (0, 1)".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(OrbitError::InvalidInput("iteration limits must be >= 1".into()));
        }
        if let Some(f) = self.collision_floor {
            if !(f > 0.0) {
                return Err(OrbitError::InvalidInput("collision_floor must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn floor_for(&self, radius: f64) -> f64 {
        self.collision_floor.unwrap_or(1e-6 * radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    CollisionAbort,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterIteration {
    pub outer: usize,
    pub inner_iterations: usize,
    pub penalty: f64,
    /// Multiplier estimate in the units of `∇D + λ∇g = 0`.
    pub multiplier: f64,
    pub merit_start: f64,
    pub merit_end: f64,
    pub big_f: f64,
    pub constraint_residual: f64,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub trace: Vec<OuterIteration>,
    /// `F` after every outer iteration.
    pub big_f_trajectory: Vec<f64>,
    pub seed_big_f: f64,
    pub functional: FunctionalReport,
    pub dirichlet: f64,
    /// `|g − H|/H` at exit.
    pub constraint_residual: f64,
    /// Least-squares multiplier of `∇D + λ∇g = 0` at exit.
    pub multiplier: f64,
    pub kkt_residual: f64,
    /// Relative KKT residual reachable in double precision at this loop;
    /// convergence uses `max(tol_kkt, kkt_roundoff_floor)`.
    pub kkt_roundoff_floor: f64,
    pub min_radius: f64,
    /// Smallest node radius over every accepted iterate.
    pub min_radius_over_iterates: f64,
    pub collision_floor: f64,
    /// The final loop touches the floor, or the solve aborted on it.
    pub collision_floor_active: bool,
    /// Line-search trials rejected for crossing the floor.
    pub floor_rejections: usize,
    /// Steps taken by the terminal Newton–KKT polish.
    pub newton_iterations: usize,
    pub merit_monotone: bool,
}

impl SolveReport {
    /// Maps a non-converged status to the corresponding error.
    pub fn check(&self) -> Result<()> {
        match self.status {
            SolveStatus::Converged => Ok(()),
            SolveStatus::MaxIterations => Err(OrbitError::MaxIterations {
                iterations: self.inner_iterations,
            }),
            SolveStatus::CollisionAbort => Err(OrbitError::CollisionAbort {
                floor: self.collision_floor,
            }),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KktReport {
    pub multiplier: f64,
    /// `‖∇D + λ∇g‖ / max(‖∇D‖, |λ|‖∇g‖)`
    pub stationarity_residual: f64,
    pub absolute_residual: f64,
    /// Relative residual attainable in double precision: the change in `∇D`
    /// caused by one-ulp moves of the nodes, over the same scale.
    pub roundoff_floor: f64,
}

impl KktReport {
    /// Stationarity tolerance that is never below the rounding floor.
    pub fn effective_tolerance(&self, tol: f64) -> f64 {
        tol.max(self.roundoff_floor)
    }
}

/// Change of `c·(2q_j − q_{j−1} − q_{j+1})` under a one-ulp perturbation of
/// every node (about `4c·2ε|q_j|` per component, with a factor two margin).
fn dirichlet_noise(nodes: &[f64], coefficient: f64) -> f64 {
    16.0 * coefficient * f64::EPSILON * norm(nodes)
}

fn kkt_from(ev: &NodeEval, noise: f64) -> KktReport {
    let gg = norm_sq(&ev.grad_g);
    let lambda = if gg > 0.0 {
        -dot(&ev.grad_dirichlet, &ev.grad_g) / gg
    } else {
        0.0
    };
    let abs: f64 = ev
        .grad_dirichlet
        .iter()
        .zip(&ev.grad_g)
        .map(|(d, g)| (d + lambda * g).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(&ev.grad_dirichlet)
        .max(lambda.abs() * gg.sqrt())
        .max(f64::MIN_POSITIVE);
    KktReport {
        multiplier: lambda,
        stationarity_residual: abs / scale,
        absolute_residual: abs,
        roundoff_floor: noise / scale,
    }
}

/// Least-squares multiplier and relative stationarity residual of
/// `∇D + λ∇g = 0` over the free nodes.
pub fn kkt_report(lp: &SymmetricLoop, spec: &PotentialSpec, energy: f64) -> Result<KktReport> {
    let _ = energy;
    let ev = evaluate_nodes(spec, lp.half_nodes(), lp.dimension(), true)?;
    Ok(kkt_report_nodes(&ev, lp))
}

fn kkt_report_nodes(ev: &NodeEval, lp: &SymmetricLoop) -> KktReport {
    kkt_from(ev, dirichlet_noise(lp.half_nodes(), 8.0 * lp.n() as f64))
}

/// Stationarity residual recomputed on the unreduced full trace: all `2n`
/// nodes of the loop are independent except the two pinned images
/// `q(0) = R·e` and `q(1/2) = −R·e`. Uses no antisymmetry shortcut.
pub fn full_space_stationarity(lp: &SymmetricLoop, spec: &PotentialSpec) -> Result<KktReport> {
    let trace = lp.full_trace();
    let m = trace.len() - 1; // 2n, trace[m] == trace[0]
    let n = lp.n();
    let dt = 1.0 / m as f64;
    let factor = 1.0 - 0.5 * spec.alpha;
    let dim = lp.dimension();
    let mut gd = Vec::with_capacity((m - 2) * dim);
    let mut gg = Vec::with_capacity((m - 2) * dim);
    for j in 1..m {
        if j == n {
            continue;
        }
        let grad_v = spec.eval_gradient(&trace[j])?;
        for k in 0..dim {
            gd.push(2.0 / dt * (2.0 * trace[j][k] - trace[j - 1][k] - trace[j + 1][k]));
            gg.push(dt * factor * grad_v[k]);
        }
    }
    let ev = NodeEval {
        dirichlet: 0.0,
        integral_v: 0.0,
        g: 0.0,
        grad_dirichlet: gd,
        grad_integral_v: vec![],
        grad_g: gg,
    };
    let flat: Vec<f64> = trace.iter().flatten().copied().collect();
    Ok(kkt_from(&ev, dirichlet_noise(&flat, 2.0 / dt)))
}

/// Thresholds (`|g − H|/H`, relative KKT) below which the Newton polish is tried.
const POLISH_CONSTRAINT: f64 = 1e-4;
const POLISH_KKT: f64 = 1.0;
const POLISH_MAX_STEPS: usize = 500;

#[derive(Clone, Debug)]
pub struct Solution {
    pub minimizer: SymmetricLoop,
    pub report: SolveReport,
}

/// Solves `tridiag(−1, 2, −1)·y = v` (size `m`) in place, per coordinate of
/// an `m × dim` row-major block.
fn tridiagonal_solve(v: &mut [f64], dim: usize, scratch: &mut Vec<f64>) {
    let m = v.len() / dim;
    scratch.clear();
    scratch.resize(m, 0.0);
    for k in 0..dim {
        // Thomas algorithm; c' stored in scratch
        let mut denom = 2.0;
        scratch[0] = -1.0 / denom;
        v[k] /= denom;
        for i in 1..m {
            denom = 2.0 + scratch[i - 1];
            scratch[i] = -1.0 / denom;
            v[i * dim + k] = (v[i * dim + k] + v[(i - 1) * dim + k]) / denom;
        }
        for i in (0..m - 1).rev() {
            v[i * dim + k] -= scratch[i] * v[(i + 1) * dim + k];
        }
    }
}

struct Problem<'a> {
    spec: &'a PotentialSpec,
    dim: usize,
    /// pinned first and last half nodes
    head: Vec<f64>,
    tail: Vec<f64>,
    energy: f64,
    d_scale: f64,
    floor: f64,
    nodes_buf: Vec<f64>,
}

struct Merit {
    value: f64,
    grad: Vec<f64>,
    ev: NodeEval,
}

impl<'a> Problem<'a> {
    fn assemble(&mut self, x: &[f64]) {
        self.nodes_buf.clear();
        self.nodes_buf.extend_from_slice(&self.head);
        self.nodes_buf.extend_from_slice(x);
        self.nodes_buf.extend_from_slice(&self.tail);
    }

    fn kkt(&self, ev: &NodeEval, x: &[f64]) -> KktReport {
        let n = x.len() / self.dim + 1;
        let sq = norm_sq(x) + norm_sq(&self.head) + norm_sq(&self.tail);
        kkt_from(ev, 16.0 * 8.0 * n as f64 * f64::EPSILON * sq.sqrt())
    }

    fn min_radius(&self, x: &[f64]) -> f64 {
        x.chunks(self.dim).map(norm).fold(f64::INFINITY, f64::min)
    }

    /// Augmented Lagrangian in scaled form:
    /// `D/D₀ + λ·c + ½μc²` with `c = (g − H)/H`.
    fn merit(&mut self, x: &[f64], lambda: f64, mu: f64) -> Result<Merit> {
        self.assemble(x);
        let ev = evaluate_nodes(self.spec, &self.nodes_buf, self.dim, true)?;
        let c = (ev.g - self.energy) / self.energy;
        let value = ev.dirichlet / self.d_scale + lambda * c + 0.5 * mu * c * c;
        let w = (lambda + mu * c) / self.energy;
        let grad = ev
            .grad_dirichlet
            .iter()
            .zip(&ev.grad_g)
            .map(|(d, g)| d / self.d_scale + w * g)
            .collect();
        Ok(Merit { value, grad, ev })
    }
}

fn relative_merit_gradient(m: &Merit, problem: &Problem, lambda: f64, mu: f64) -> f64 {
    let c = (m.ev.g - problem.energy) / problem.energy;
    let w = ((lambda + mu * c) / problem.energy).abs();
    let scale = (norm(&m.ev.grad_dirichlet) / problem.d_scale).max(w * norm(&m.ev.grad_g));
    norm(&m.grad) / scale.max(f64::MIN_POSITIVE)
}

struct InnerOutcome {
    x: Vec<f64>,
    merit: Merit,
    iterations: usize,
    floor_rejections: usize,
    collision_abort: bool,
    min_radius_seen: f64,
}

#[allow(clippy::too_many_arguments)]
fn lbfgs_inner(
    problem: &mut Problem,
    x0: Vec<f64>,
    start: Merit,
    lambda: f64,
    mu: f64,
    tol: f64,
    config: &SolverConfig,
    n: usize,
) -> Result<InnerOutcome> {
    let dim = problem.dim;
    let precond_scale = problem.d_scale / (8.0 * n as f64);
    let mut x = x0;
    let mut cur = start;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut scratch = Vec::new();
    let mut floor_rejections = 0;
    let mut min_radius_seen = problem.min_radius(&x);
    let mut iterations = 0;
    let mut collision_abort = false;

    while iterations < config.max_inner {
        if relative_merit_gradient(&cur, problem, lambda, mu) <= tol {
            break;
        }
        // two-loop recursion with H₀ = γ·P⁻¹
        let mut q = cur.grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            crate::vecops::axpy(&mut q, -a, y);
            alphas.push(a);
        }
        tridiagonal_solve(&mut q, dim, &mut scratch);
        let gamma = match history.back() {
            Some((s, y, _)) => {
                let mut py = y.clone();
                tridiagonal_solve(&mut py, dim, &mut scratch);
                dot(s, y) / dot(y, &py)
            }
            None => precond_scale,
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            crate::vecops::axpy(&mut q, a - b, s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&cur.grad, &dir);
        if !(slope < 0.0) {
            // not a descent direction: reset memory and fall back to the preconditioned gradient
            history.clear();
            dir = cur.grad.clone();
            tridiagonal_solve(&mut dir, dim, &mut scratch);
            for v in dir.iter_mut() {
                *v *= -precond_scale;
            }
            slope = dot(&cur.grad, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        let mut floor_rejected = false;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let r_min = problem.min_radius(&trial);
            if r_min < problem.floor {
                floor_rejections += 1;
                floor_rejected = true;
                step *= config.line_search_shrink;
                continue;
            }
            match problem.merit(&trial, lambda, mu) {
                Ok(m) if m.value.is_finite() && m.value <= cur.value + config.sufficient_decrease * step * slope => {
                    accepted = Some((trial, m, r_min));
                    break;
                }
                _ => step *= config.line_search_shrink,
            }
        }
        let Some((trial, m, r_min)) = accepted else {
            if floor_rejected {
                collision_abort = true;
            }
            trace!("line search stalled after {iterations} inner iterations");
            break;
        };
        min_radius_seen = min_radius_seen.min(r_min);
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = m.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let progress = cur.value - m.value;
        x = trial;
        cur = m;
        iterations += 1;
        if progress <= 1e-16 * cur.value.abs().max(1e-300)
            && relative_merit_gradient(&cur, problem, lambda, mu) <= tol.max(1e-12)
        {
            break;
        }
    }
    Ok(InnerOutcome {
        x,
        merit: cur,
        iterations,
        floor_rejections,
        collision_abort,
        min_radius_seen,
    })
}

/// Inverts a small dense `d × d` matrix by Gauss–Jordan with partial
/// pivoting. `None` if (numerically) singular.
fn invert_small(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))?;
        if !(m[piv * d + col].abs() > 1e-14 * scale) {
            return None;
        }
        if piv != col {
            for k in 0..d {
                m.swap(piv * d + k, col * d + k);
                inv.swap(piv * d + k, col * d + k);
            }
        }
        let p = m[col * d + col];
        for k in 0..d {
            m[col * d + k] /= p;
            inv[col * d + k] /= p;
        }
        for i in 0..d {
            if i != col {
                let f = m[i * d + col];
                if f != 0.0 {
                    for k in 0..d {
                        m[i * d + k] -= f * m[col * d + k];
                        inv[i * d + k] -= f * inv[col * d + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn mat_vec(a: &[f64], x: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        out[i] = (0..d).map(|k| a[i * d + k] * x[k]).sum();
    }
}

/// Block-tridiagonal matrix with symmetric diagonal blocks `B_i` and scalar
/// off-diagonal blocks `o·I`, factored by block elimination.
struct BlockTridiagonal {
    d: usize,
    off: f64,
    /// inverses of the eliminated diagonal blocks
    inv: Vec<f64>,
}

impl BlockTridiagonal {
    fn factor(diag: &[f64], d: usize, off: f64) -> Option<Self> {
        let m = diag.len() / (d * d);
        let mut inv = Vec::with_capacity(diag.len());
        let mut prev: Option<Vec<f64>> = None;
        for i in 0..m {
            let mut b = diag[i * d * d..(i + 1) * d * d].to_vec();
            if let Some(p) = &prev {
                for (bv, pv) in b.iter_mut().zip(p) {
                    *bv -= off * off * pv;
                }
            }
            let bi = invert_small(&b, d)?;
            inv.extend_from_slice(&bi);
            prev = Some(bi);
        }
        Some(Self { d, off, inv })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.d;
        let m = rhs.len() / d;
        let mut b = rhs.to_vec();
        let mut tmp = vec![0.0; d];
        for i in 1..m {
            let (head, tail) = b.split_at_mut(i * d);
            mat_vec(&self.inv[(i - 1) * d * d..i * d * d], &head[(i - 1) * d..], d, &mut tmp);
            for k in 0..d {
                tail[k] -= self.off * tmp[k];
            }
        }
        let mut x = vec![0.0; rhs.len()];
        for i in (0..m).rev() {
            let mut r = b[i * d..(i + 1) * d].to_vec();
            if i + 1 < m {
                for k in 0..d {
                    r[k] -= self.off * x[(i + 1) * d + k];
                }
            }
            mat_vec(&self.inv[i * d * d..(i + 1) * d * d], &r, d, &mut tmp);
            x[i * d..(i + 1) * d].copy_from_slice(&tmp);
        }
        x
    }
}

struct PolishOutcome {
    x: Vec<f64>,
    iterations: usize,
    floor_rejections: usize,
}

/// Pulls `x` back onto `g = H` along `∇g(x)` by a scalar Newton iteration.
fn project_to_constraint(problem: &mut Problem, x: &[f64], direction: &[f64]) -> Option<(Vec<f64>, NodeEval)> {
    let dim = problem.dim;
    let energy = problem.energy;
    let mut sigma = 0.0;
    let mut y = x.to_vec();
    for _ in 0..30 {
        problem.assemble(&y);
        let ev = evaluate_nodes(problem.spec, &problem.nodes_buf, dim, true).ok()?;
        let c = ev.g - energy;
        if c.abs() <= 1e-14 * energy {
            return Some((y, ev));
        }
        let slope = dot(&ev.grad_g, direction);
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        sigma -= c / slope;
        y = x.iter().zip(direction).map(|(a, d)| a + sigma * d).collect();
        if problem.min_radius(&y) < problem.floor {
            return None;
        }
    }
    problem.assemble(&y);
    let ev = evaluate_nodes(problem.spec, &problem.nodes_buf, dim, true).ok()?;
    ((ev.g - energy).abs() <= 1e-12 * energy).then_some((y, ev))
}

/// Feasible Newton iteration for `min D` on `g = H`.
///
/// Each step solves the KKT system with the block-tridiagonal Lagrangian
/// Hessian, caps every node's displacement at a fraction of its radius,
/// and projects the trial point back onto the constraint. Acceptance is
/// Armijo on `D`, or, once `D` is flat to rounding, a decrease of the KKT
/// residual.
fn newton_polish(problem: &mut Problem, x0: Vec<f64>, config: &SolverConfig, n: usize) -> Result<PolishOutcome> {
    let dim = problem.dim;
    let dt = 1.0 / (2 * n) as f64;
    let factor = 1.0 - 0.5 * problem.spec.alpha;
    let mut floor_rejections = 0;
    problem.assemble(&x0);
    let start = evaluate_nodes(problem.spec, &problem.nodes_buf, dim, true)?;
    let Some((mut x, mut ev)) = project_to_constraint(problem, &x0, &start.grad_g) else {
        return Ok(PolishOutcome {
            x: x0,
            iterations: 0,
            floor_rejections,
        });
    };
    let mut iterations = 0;
    let mut hess = vec![0.0; dim * dim];
    let mut neg = vec![0.0; dim];
    let mut stalls = 0;
    while iterations < POLISH_MAX_STEPS {
        let kkt = problem.kkt(&ev, &x);
        if kkt.stationarity_residual < 0.1 * kkt.effective_tolerance(config.tol_kkt) {
            break;
        }
        let lambda = kkt.multiplier;
        let m = n - 1;
        let mut diag = vec![0.0; m * dim * dim];
        for j in 0..m {
            let q = &x[j * dim..(j + 1) * dim];
            let r2 = norm_sq(q);
            let blk = &mut diag[j * dim * dim..(j + 1) * dim * dim];
            problem.spec.hessian_unchecked(q, r2, &mut hess);
            blk.copy_from_slice(&hess);
            for (o, v) in neg.iter_mut().zip(q) {
                *o = -v;
            }
            problem.spec.hessian_unchecked(&neg, r2, &mut hess);
            for (b, h) in blk.iter_mut().zip(&hess) {
                *b = lambda * dt * factor * (*b + h);
            }
            for k in 0..dim {
                blk[k * dim + k] += 16.0 * n as f64;
            }
        }
        let r: Vec<f64> = ev
            .grad_dirichlet
            .iter()
            .zip(&ev.grad_g)
            .map(|(d, g)| d + lambda * g)
            .collect();
        let step_dir = BlockTridiagonal::factor(&diag, dim, -8.0 * n as f64).and_then(|w_mat| {
            // tangent Newton step: W dx + a μ = −r, aᵀdx = 0
            let u = w_mat.solve(&r);
            let w = w_mat.solve(&ev.grad_g);
            let aw = dot(&ev.grad_g, &w);
            if aw == 0.0 || !aw.is_finite() {
                return None;
            }
            let mu = -dot(&ev.grad_g, &u) / aw;
            let dx: Vec<f64> = u.iter().zip(&w).map(|(a, b)| -a - mu * b).collect();
            (dot(&r, &dx) < 0.0).then_some(dx)
        });
        let dx = match step_dir {
            Some(d) => d,
            None => {
                // indefinite on the tangent space: preconditioned projected gradient
                let mut scratch = Vec::new();
                let mut d = r.clone();
                tridiagonal_solve(&mut d, dim, &mut scratch);
                let mut pa = ev.grad_g.clone();
                tridiagonal_solve(&mut pa, dim, &mut scratch);
                let t = dot(&ev.grad_g, &d) / dot(&ev.grad_g, &pa);
                d.iter()
                    .zip(&pa)
                    .map(|(a, b)| -(a - t * b) / (8.0 * n as f64))
                    .collect()
            }
        };
        let slope = dot(&r, &dx);
        // trust region: no node moves by more than a quarter of its radius
        let mut t_max = 1.0f64;
        for (q, d) in x.chunks(dim).zip(dx.chunks(dim)) {
            let dn = norm(d);
            if dn > 0.0 {
                t_max = t_max.min(0.25 * norm(q) / dn);
            }
        }
        let d_now = ev.dirichlet;
        let r_now = kkt.absolute_residual;
        let mut step = t_max;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            if problem.min_radius(&trial) < problem.floor {
                floor_rejections += 1;
                step *= 0.5;
                continue;
            }
            if let Some((y, yev)) = project_to_constraint(problem, &trial, &ev.grad_g) {
                let armijo = yev.dirichlet <= d_now + 1e-4 * step * slope;
                let flat = yev.dirichlet <= d_now * (1.0 + 64.0 * f64::EPSILON)
                    && problem.kkt(&yev, &y).absolute_residual < (1.0 - 1e-4 * step) * r_now;
                if armijo || flat {
                    accepted = Some((y, yev));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((y, yev)) = accepted else {
            trace!("newton polish: line search failed after {iterations} steps");
            break;
        };
        if (d_now - yev.dirichlet).abs() <= 4.0 * f64::EPSILON * d_now {
            stalls += 1;
            if stalls > 20 {
                break;
            }
        } else {
            stalls = 0;
        }
        x = y;
        ev = yev;
        iterations += 1;
    }
    Ok(PolishOutcome {
        x,
        iterations,
        floor_rejections,
    })
}

/// Minimizes the Dirichlet energy over the interior nodes subject to
/// `g(q) = H`, starting from a loop already near the constraint.
///
/// Non-convergence is not an `Err`: the best iterate comes back with its
/// status in the report (see [`SolveReport::check`]).
pub fn minimize_constrained(
    seed: &SymmetricLoop,
    spec: &PotentialSpec,
    energy: f64,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    spec.require_solver_hypotheses()?;
    if !(energy > 0.0) {
        return Err(OrbitError::Precondition(format!("energy H must be > 0, got {energy}")));
    }
    let dim = seed.dimension();
    let n = seed.n();
    let seed_eval = evaluate_nodes(spec, seed.half_nodes(), dim, false)?;
    if (seed_eval.g - energy).abs() >= 1e-6 * energy {
        return Err(OrbitError::Precondition(format!(
            "seed is off the constraint: |g - H| = {:e}",
            (seed_eval.g - energy).abs()
        )));
    }
    let seed_big_f = -crate::functional::product_functional(seed_eval.dirichlet, seed_eval.integral_v, energy);
    let floor = config.floor_for(seed.radius());
    let nodes = seed.half_nodes();
    let mut problem = Problem {
        spec,
        dim,
        head: nodes[..dim].to_vec(),
        tail: nodes[n * dim..].to_vec(),
        energy,
        d_scale: seed_eval.dirichlet,
        floor,
        nodes_buf: Vec::with_capacity(nodes.len()),
    };
    if problem.min_radius(seed.interior()) < floor {
        return Err(OrbitError::Precondition("seed violates the collision floor".into()));
    }

    let mut x = seed.interior().to_vec();
    let mut lambda = 0.0;
    let mut mu = config.penalty_init;
    let mut eta = 1.0 / mu.powf(0.1);
    let mut omega = 1e-2f64;
    let mut trace = Vec::new();
    let mut big_f_trajectory = Vec::new();
    let mut inner_total = 0;
    let mut floor_rejections = 0;
    let mut newton_iterations = 0;
    let mut min_radius_seen = problem.min_radius(&x);
    let mut merit_monotone = true;
    let mut status = SolveStatus::MaxIterations;
    let mut last_polish_kkt = f64::INFINITY;

    for outer in 0..config.max_outer {
        let start = problem.merit(&x, lambda, mu)?;
        let merit_start = start.value;
        let inner_tol = omega.max(0.1 * config.tol_kkt);
        let out = lbfgs_inner(&mut problem, x, start, lambda, mu, inner_tol, config, n)?;
        inner_total += out.iterations;
        floor_rejections += out.floor_rejections;
        min_radius_seen = min_radius_seen.min(out.min_radius_seen);
        x = out.x;
        let merit_end = out.merit.value;
        if merit_end > merit_start {
            merit_monotone = false;
        }
        let ev = &out.merit.ev;
        let c = (ev.g - energy) / energy;
        let kkt = problem.kkt(ev, &x);
        let big_f = -crate::functional::product_functional(ev.dirichlet, ev.integral_v, energy);
        big_f_trajectory.push(big_f);
        trace.push(OuterIteration {
            outer,
            inner_iterations: out.iterations,
            penalty: mu,
            multiplier: (lambda + mu * c) * problem.d_scale / energy,
            merit_start,
            merit_end,
            big_f,
            constraint_residual: c.abs(),
            kkt_residual: kkt.stationarity_residual,
        });
        debug!(
            "outer {outer}: inner {} |c| {:.3e} kkt {:.3e} mu {mu:.1e} F {big_f:.12e}",
            out.iterations,
            c.abs(),
            kkt.stationarity_residual
        );
        if out.collision_abort {
            status = SolveStatus::CollisionAbort;
            break;
        }
        if c.abs() < config.tol_constraint && kkt.stationarity_residual < kkt.effective_tolerance(config.tol_kkt) {
            status = SolveStatus::Converged;
            break;
        }
        if c.abs() < POLISH_CONSTRAINT && kkt.stationarity_residual < POLISH_KKT.min(0.5 * last_polish_kkt) {
            let pol = newton_polish(&mut problem, x.clone(), config, n)?;
            newton_iterations += pol.iterations;
            floor_rejections += pol.floor_rejections;
            if pol.iterations > 0 {
                problem.assemble(&pol.x);
                let pev = evaluate_nodes(spec, &problem.nodes_buf, dim, true)?;
                let pc = (pev.g - energy) / energy;
                let pk = problem.kkt(&pev, &pol.x);
                last_polish_kkt = pk.stationarity_residual;
                debug!(
                    "newton polish: {} steps, |c| {:.3e} kkt {:.3e}",
                    pol.iterations,
                    pc.abs(),
                    pk.stationarity_residual
                );
                x = pol.x;
                min_radius_seen = min_radius_seen.min(problem.min_radius(&x));
                if pc.abs() < config.tol_constraint && pk.stationarity_residual < pk.effective_tolerance(config.tol_kkt)
                {
                    big_f_trajectory.push(-crate::functional::product_functional(
                        pev.dirichlet,
                        pev.integral_v,
                        energy,
                    ));
                    status = SolveStatus::Converged;
                    break;
                }
                // hand the improved multiplier back to the outer loop
                lambda = pk.multiplier * energy / problem.d_scale - mu * pc;
                continue;
            }
        }
        if c.abs() <= eta {
            lambda += mu * c;
            eta = (eta / mu.powf(0.9)).max(0.1 * config.tol_constraint);
            omega = (omega * 0.1).max(0.1 * config.tol_kkt);
        } else {
            mu *= config.penalty_growth;
            eta = (1.0 / mu.powf(0.1)).max(0.1 * config.tol_constraint);
            omega = (omega * 0.5).max(0.1 * config.tol_kkt);
        }
    }

    let minimizer = seed.with_interior(&x)?;
    let functional = functional_report(&minimizer, spec, energy)?;
    let ev = evaluate_nodes(spec, minimizer.half_nodes(), dim, true)?;
    let kkt = kkt_report_nodes(&ev, &minimizer);
    let min_radius = minimizer.min_radius();
    let floor_active = status == SolveStatus::CollisionAbort || min_radius <= floor * (1.0 + 1e-6);
    let report = SolveReport {
        status,
        outer_iterations: trace.len(),
        inner_iterations: inner_total,
        trace,
        big_f_trajectory,
        seed_big_f,
        dirichlet: ev.dirichlet,
        constraint_residual: (ev.g - energy).abs() / energy,
        multiplier: kkt.multiplier,
        kkt_residual: kkt.stationarity_residual,
        kkt_roundoff_floor: kkt.roundoff_floor,
        functional,
        min_radius,
        min_radius_over_iterates: min_radius_seen.min(min_radius),
        collision_floor: floor,
        collision_floor_active: floor_active,
        floor_rejections,
        newton_iterations,
        merit_monotone,
    };
    Ok(Solution { minimizer, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::solve_seed;

    #[test]
    fn tridiagonal_solver_inverts_laplacian() {
        let m = 7;
        let dim = 2;
        let y: Vec<f64> = (0..m * dim).map(|i| (i as f64 * 0.37).sin()).collect();
        // v = T y
        let mut v = vec![0.0; m * dim];
        for i in 0..m {
            for k in 0..dim {
                let l = if i > 0 { y[(i - 1) * dim + k] } else { 0.0 };
                let r = if i + 1 < m { y[(i + 1) * dim + k] } else { 0.0 };
                v[i * dim + k] = 2.0 * y[i * dim + k] - l - r;
            }
        }
        let mut scratch = Vec::new();
        tridiagonal_solve(&mut v, dim, &mut scratch);
        for (a, b) in v.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            penalty_growth: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tol_kkt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_solve_converges() {
        let spec = PotentialSpec::power(1.0, 2, 1.0).unwrap();
        let seed = solve_seed(4.0, &[1.0, 0.0], 1.0, &spec, 64, None).unwrap().seed;
        let sol = minimize_constrained(&seed, &spec, 1.0, &SolverConfig::default()).unwrap();
        let r = &sol.report;
        assert_eq!(r.status, SolveStatus::Converged, "{r:#?}");
        assert!(r.constraint_residual < 1e-9);
        assert!(r.kkt_residual < 1e-8);
        assert!(r.functional.big_f_value <= r.seed_big_f);
        assert!(r.merit_monotone);
    }
}
