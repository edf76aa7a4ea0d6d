//! Repulsive (−α)-homogeneous potentials `V(x) = profile(x/|x|)·|x|^{−α}`.
//!
//! A [`PotentialSpec`] is immutable once built. Hypothesis checks are
//! sampling based: the hypotheses are stated for every `x ≠ 0`, so the checker
//! evaluates them on a deterministic low-discrepancy sample of spheres and
//! reports the worst residual together with its witness point.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::vecops::{dot, norm, norm_sq};

/// Relative step of the central-difference gradient fallback.
pub const GRADIENT_FD_STEP: f64 = 1e-6;
/// Relative step of the nested difference used for `(x, ∇²V(x) x)`.
pub const HESSIAN_FD_STEP: f64 = 1e-4;

const EULER_TOL: f64 = 1e-9;
const EVENNESS_TOL: f64 = 1e-9;
const BOUNDS_SLACK: f64 = 1e-9;
const DECAY_SLACK: f64 = 1e-9;
const NONDEGENERACY_TOL: f64 = 1e-6;

type ProfileFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A user-supplied profile on the unit sphere together with its declared
/// evenness. The gradient of the resulting potential is computed by central
/// differences.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub even: bool,
    value: Arc<ProfileFn>,
}

impl CustomProfile {
    pub fn new<F>(name: impl Into<String>, even: bool, value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            even,
            value: Arc::new(value),
        }
    }
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("name", &self.name)
            .field("even", &self.even)
            .finish()
    }
}

/// Angular profile of the potential.
#[derive(Clone, Debug)]
pub enum Profile {
    /// `c`, giving `V = c·|x|^{−α}`.
    Power {
        coefficient: f64,
    },
    /// `c·(1 + s·θ₁²)`: even and positive for `s > −1`.
    Anisotropic {
        coefficient: f64,
        strength: f64,
    },
    Custom(CustomProfile),
}

impl Profile {
    fn is_even_declared(&self) -> bool {
        match self {
            Profile::Power { .. } | Profile::Anisotropic { .. } => true,
            Profile::Custom(c) => c.even,
        }
    }

    fn name(&self) -> String {
        match self {
            Profile::Power { .. } => "power".into(),
            Profile::Anisotropic { .. } => "anisotropic".into(),
            Profile::Custom(c) => c.name.clone(),
        }
    }
}

/// Sign of the coupling. Attractive potentials exist only to realize the
/// closed-form oracles; the solver refuses them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Repulsive,
    Attractive,
}

impl Coupling {
    fn sign(self) -> f64 {
        match self {
            Coupling::Repulsive => 1.0,
            Coupling::Attractive => -1.0,
        }
    }
}

/// Decay constants `|x|^{β+1}|∇V(x)| ≤ M₀` for `|x| ≥ r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub beta: f64,
    pub m0: f64,
    pub r0: f64,
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub alpha: f64,
    pub dimension: usize,
    pub profile: Profile,
    pub coupling: Coupling,
    pub decay: Option<DecayParams>,
}

impl PotentialSpec {
    /// Builds a spec. Only structural validity is enforced here (α > 0,
    /// N ≥ 2, positive coefficient); the hypothesis range 0 < α < 2 is a
    /// checked property, see [`PotentialSpec::check_hypotheses`] and
    /// [`PotentialSpec::require_solver_hypotheses`].
    pub fn new(alpha: f64, dimension: usize, profile: Profile) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(OrbitError::InvalidInput(format!("alpha must be > 0, got {alpha}")));
        }
        if dimension < 2 {
            return Err(OrbitError::InvalidInput(format!(
                "dimension must be >= 2, got {dimension}"
            )));
        }
        match &profile {
            Profile::Power { coefficient } if !(*coefficient > 0.0 && coefficient.is_finite()) => {
                return Err(OrbitError::InvalidInput("coefficient must be > 0".into()));
            }
            Profile::Anisotropic { coefficient, strength } => {
                if !(*coefficient > 0.0 && coefficient.is_finite()) {
                    return Err(OrbitError::InvalidInput("coefficient must be > 0".into()));
                }
                if !(*strength > -1.0 && strength.is_finite()) {
                    return Err(OrbitError::InvalidInput(
                        "anisotropy strength must be > -1 to keep the profile positive".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(Self {
            alpha,
            dimension,
            profile,
            coupling: Coupling::Repulsive,
            decay: None,
        })
    }

    pub fn power(alpha: f64, dimension: usize, coefficient: f64) -> Result<Self> {
        Self::new(alpha, dimension, Profile::Power { coefficient })
    }

    pub fn anisotropic(alpha: f64, dimension: usize, coefficient: f64, strength: f64) -> Result<Self> {
        Self::new(alpha, dimension, Profile::Anisotropic { coefficient, strength })
    }

    /// `V = −c·|x|^{−α}`.
    pub fn attractive_power(alpha: f64, dimension: usize, coefficient: f64) -> Result<Self> {
        Ok(Self::power(alpha, dimension, coefficient)?.with_coupling(Coupling::Attractive))
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_decay(mut self, decay: DecayParams) -> Self {
        self.decay = Some(decay);
        self
    }

    pub fn is_repulsive(&self) -> bool {
        self.coupling == Coupling::Repulsive
    }

    pub fn profile_name(&self) -> String {
        self.profile.name()
    }

    /// The solve pipeline needs a repulsive potential with 0 < α < 2.
    pub fn require_solver_hypotheses(&self) -> Result<()> {
        if !self.is_repulsive() {
            return Err(OrbitError::Precondition(
                "solver requires a repulsive potential (V > 0)".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(OrbitError::Precondition(format!(
                "(V1) range violated: alpha = {} not in (0, 2)",
                self.alpha
            )));
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(OrbitError::InvalidInput(format!(
                "point has dimension {}, spec has {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Profile value at a unit vector (no sign applied).
    pub fn profile_value(&self, theta: &[f64]) -> f64 {
        match &self.profile {
            Profile::Power { coefficient } => *coefficient,
            Profile::Anisotropic { coefficient, strength } => coefficient * (1.0 + strength * theta[0] * theta[0]),
            Profile::Custom(c) => (c.value)(theta),
        }
    }

    /// `V(x)`; the singularity is an error.
    pub fn eval_potential(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let r2 = norm_sq(x);
        if !(r2 > 0.0) {
            return Err(OrbitError::Singularity);
        }
        Ok(self.potential_unchecked(x, r2))
    }

    /// Hot-path evaluation; caller guarantees `r2 = |x|² > 0`.
    #[inline]
    pub(crate) fn potential_unchecked(&self, x: &[f64], r2: f64) -> f64 {
        let sign = self.coupling.sign();
        match &self.profile {
            Profile::Power { coefficient } => sign * coefficient * r2.powf(-0.5 * self.alpha),
            Profile::Anisotropic { coefficient, strength } => {
                sign * coefficient * (1.0 + strength * x[0] * x[0] / r2) * r2.powf(-0.5 * self.alpha)
            }
            Profile::Custom(c) => {
                let r = r2.sqrt();
                let theta: Vec<f64> = x.iter().map(|v| v / r).collect();
                sign * (c.value)(&theta) * r.powf(-self.alpha)
            }
        }
    }

    /// `∇V(x)`.
    pub fn eval_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let r2 = norm_sq(x);
        if !(r2 > 0.0) {
            return Err(OrbitError::Singularity);
        }
        let mut out = vec![0.0; x.len()];
        self.gradient_unchecked(x, r2, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn gradient_unchecked(&self, x: &[f64], r2: f64, out: &mut [f64]) {
        let sign = self.coupling.sign();
        let a = self.alpha;
        match &self.profile {
            Profile::Power { coefficient } => {
                let s = -sign * a * coefficient * r2.powf(-0.5 * a - 1.0);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
            Profile::Anisotropic { coefficient, strength } => {
                let c = sign * coefficient;
                let base = r2.powf(-0.5 * a - 1.0);
                let x1 = x[0];
                // c r^{-α} + c s x₁² r^{-α-2}
                let radial = -a * base - strength * (a + 2.0) * x1 * x1 * base / r2;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = c * radial * xi;
                }
                out[0] += c * 2.0 * strength * x1 * base;
            }
            Profile::Custom(_) => {
                let h = GRADIENT_FD_STEP * r2.sqrt();
                let mut probe = x.to_vec();
                for k in 0..x.len() {
                    probe[k] = x[k] + h;
                    let vp = self.potential_unchecked(&probe, norm_sq(&probe));
                    probe[k] = x[k] - h;
                    let vm = self.potential_unchecked(&probe, norm_sq(&probe));
                    probe[k] = x[k];
                    out[k] = (vp - vm) / (2.0 * h);
                }
            }
        }
    }

    /// The quadratic form `(x, ∇²V(x) x)`: analytic for pure powers, nested
    /// central differences along the ray otherwise.
    pub fn radial_hessian_form(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let r2 = norm_sq(x);
        if !(r2 > 0.0) {
            return Err(OrbitError::Singularity);
        }
        if let Profile::Power { coefficient } = self.profile {
            // ∇²V = c(−α r^{−α−2} I + α(α+2) r^{−α−4} x xᵀ)
            let a = self.alpha;
            return Ok(self.coupling.sign() * coefficient * a * (a + 1.0) * r2.powf(-0.5 * a));
        }
        let h = HESSIAN_FD_STEP;
        let at = |s: f64| {
            let p: Vec<f64> = x.iter().map(|v| v * s).collect();
            self.potential_unchecked(&p, r2 * s * s)
        };
        Ok((at(1.0 + h) - 2.0 * at(1.0) + at(1.0 - h)) / (h * h))
    }

    /// Full Hessian `∇²V(x)`, row-major `N × N`.
    pub fn eval_hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let r2 = norm_sq(x);
        if !(r2 > 0.0) {
            return Err(OrbitError::Singularity);
        }
        let mut out = vec![0.0; x.len() * x.len()];
        self.hessian_unchecked(x, r2, &mut out);
        Ok(out)
    }

    /// Analytic for pure powers; central differences of the gradient
    /// (step `1e−5·|x|`) otherwise.
    pub(crate) fn hessian_unchecked(&self, x: &[f64], r2: f64, out: &mut [f64]) {
        let dim = x.len();
        if let Profile::Power { coefficient } = self.profile {
            let a = self.alpha;
            let c = self.coupling.sign() * coefficient;
            let s = -a * c * r2.powf(-0.5 * a - 1.0);
            let t = a * (a + 2.0) * c * r2.powf(-0.5 * a - 2.0);
            for i in 0..dim {
                for j in 0..dim {
                    out[i * dim + j] = t * x[i] * x[j] + if i == j { s } else { 0.0 };
                }
            }
            return;
        }
        let h = 1e-5 * r2.sqrt();
        let mut probe = x.to_vec();
        let mut gp = vec![0.0; dim];
        let mut gm = vec![0.0; dim];
        for k in 0..dim {
            probe[k] = x[k] + h;
            self.gradient_unchecked(&probe, norm_sq(&probe), &mut gp);
            probe[k] = x[k] - h;
            self.gradient_unchecked(&probe, norm_sq(&probe), &mut gm);
            probe[k] = x[k];
            for i in 0..dim {
                out[i * dim + k] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // symmetrize
        for i in 0..dim {
            for j in 0..i {
                let m = 0.5 * (out[i * dim + j] + out[j * dim + i]);
                out[i * dim + j] = m;
                out[j * dim + i] = m;
            }
        }
    }

    /// `3(x, ∇V(x)) + (x, ∇²V(x) x)`, equal to `α(α−2)V(x)` for exact
    /// (−α)-homogeneous potentials.
    pub fn manifold_condition(&self, x: &[f64]) -> Result<f64> {
        let grad = self.eval_gradient(x)?;
        Ok(3.0 * dot(x, &grad) + self.radial_hessian_form(x)?)
    }

    /// `V + ½(∇V, x)`, the integrand of the constraint functional.
    #[inline]
    pub(crate) fn constraint_density(&self, x: &[f64], r2: f64, grad_buf: &mut [f64]) -> f64 {
        let v = self.potential_unchecked(x, r2);
        self.gradient_unchecked(x, r2, grad_buf);
        v + 0.5 * dot(grad_buf, x)
    }

    /// `(C₁, C₂)` = min and max of the profile over a deterministic sphere
    /// sample.
    pub fn two_sided_bounds(&self, sphere_samples: usize) -> Result<(f64, f64)> {
        if sphere_samples < self.dimension {
            return Err(OrbitError::Precondition(format!(
                "sphere_samples ({sphere_samples}) must be >= dimension ({})",
                self.dimension
            )));
        }
        let samples = sphere_samples_for(self.dimension, sphere_samples);
        let mut c1 = f64::INFINITY;
        let mut c2 = f64::NEG_INFINITY;
        for theta in &samples {
            let p = self.profile_value(theta);
            c1 = c1.min(p);
            c2 = c2.max(p);
        }
        Ok((c1, c2))
    }

    /// Samples every hypothesis and reports the worst residual and its
    /// witness. Never fails: violations are data.
    pub fn check_hypotheses(&self, sample_count: usize) -> HypothesisReport {
        let count = sample_count.max(self.dimension);
        let dirs = sphere_samples_for(self.dimension, count);
        let mut shells = vec![0.1, 1.0, 10.0];
        if let Some(d) = self.decay {
            if !shells.contains(&d.r0) {
                shells.push(d.r0);
            }
        }
        let points: Vec<Vec<f64>> = shells
            .iter()
            .flat_map(|&r| dirs.iter().map(move |d| d.iter().map(|v| v * r).collect()))
            .collect();
        let sign = self.coupling.sign();
        let (c1, c2) = self.two_sided_bounds(count).unwrap_or((f64::NAN, f64::NAN));
        let mut checks = Vec::new();

        // α range
        let in_range = self.alpha > 0.0 && self.alpha < 2.0;
        checks.push(HypothesisCheck {
            name: "V1-range".into(),
            passed: in_range,
            worst_residual: if in_range { 0.0 } else { self.alpha },
            witness: vec![],
            detail: if in_range {
                format!("alpha = {} in (0, 2)", self.alpha)
            } else {
                format!("(V1) range violated: alpha = {} not in (0, 2)", self.alpha)
            },
        });

        // Euler relation with a strict sign: (x, ∇V) = −αV < 0
        let mut euler = Worst::new();
        let mut sign_ok = true;
        for x in &points {
            let v = self.eval_potential(x).unwrap_or(f64::NAN);
            let g = self.eval_gradient(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
            let pairing = dot(x, &g);
            euler.update((pairing + self.alpha * v).abs() / v.abs(), x);
            if !(pairing < 0.0 && v > 0.0) {
                sign_ok = false;
            }
        }
        checks.push(euler.into_check(
            "V1-euler",
            EULER_TOL,
            sign_ok,
            "|(x,∇V) + αV| / |V|, with (x,∇V) < 0 < V",
        ));

        // evenness
        let mut even = Worst::new();
        for x in &points {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let v = self.eval_potential(x).unwrap_or(f64::NAN);
            let vn = self.eval_potential(&neg).unwrap_or(f64::NAN);
            even.update((v - vn).abs() / v.abs(), x);
        }
        let declared = self.profile.is_even_declared();
        let mut ev = even.into_check("B1-even", EVENNESS_TOL, declared, "|V(−x) − V(x)| / |V(x)|");
        if !declared {
            ev.detail.push_str("; profile not declared even");
        }
        checks.push(ev);

        // two-sided homogeneity bounds C₁|x|^{−α} ≤ V ≤ C₂|x|^{−α}
        let mut bounds = Worst::new();
        let mut positive = c1 > 0.0;
        for x in &points {
            let v = sign * self.eval_potential(x).unwrap_or(f64::NAN);
            let ra = norm(x).powf(-self.alpha);
            let lo = c1 * ra;
            let hi = c2 * ra;
            let excess = ((lo - v).max(v - hi)).max(0.0) / ra;
            bounds.update(excess, x);
            if v.is_nan() {
                positive = false;
            }
        }
        checks.push(bounds.into_check(
            "two-sided-bounds",
            BOUNDS_SLACK,
            positive,
            &format!("C1 = {c1}, C2 = {c2}; violation of C1|x|^-α <= |V| <= C2|x|^-α"),
        ));

        // non-degeneracy 3(x,∇V) + (x,∇²Vx) ≠ 0, compared with α(α−2)V
        let mut nondeg = Worst::new();
        let mut nonzero = true;
        for x in &points {
            let m = self.manifold_condition(x).unwrap_or(f64::NAN);
            let v = self.eval_potential(x).unwrap_or(f64::NAN);
            let expected = self.alpha * (self.alpha - 2.0) * v;
            if !(m != 0.0 && m.is_finite()) || (expected != 0.0 && m.signum() != expected.signum()) {
                nonzero = false;
            }
            let scale = expected.abs().max(f64::MIN_POSITIVE);
            nondeg.update((m - expected).abs() / scale, x);
        }
        checks.push(nondeg.into_check(
            "nondegeneracy",
            NONDEGENERACY_TOL,
            nonzero,
            "3(x,∇V) + (x,∇²V x) vs α(α−2)V, relative",
        ));

        // limits of (x,∇V) + 2V = (2−α)V at the singularity and at infinity.
        // Radii scale with α so the thresholds are reachable for every α in (0,2).
        if in_range && sign > 0.0 {
            let r_small = 1e-3f64.powf(2.0 / self.alpha);
            let r_big = 1e3f64.powf(2.0 / self.alpha);
            let mut ok = true;
            let mut worst = 0.0f64;
            let mut witness = vec![];
            for theta in &dirs {
                for (r, near) in [(r_small, true), (r_big, false)] {
                    let x: Vec<f64> = theta.iter().map(|v| v * r).collect();
                    let v = self.eval_potential(&x).unwrap_or(f64::NAN);
                    let g = self.eval_gradient(&x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                    let q = dot(&x, &g) + 2.0 * v;
                    let (pass, ratio) = if near {
                        (q > 1e3 * c1, 1e3 * c1 / q)
                    } else {
                        (q < 1e-2 * c2, q / (1e-2 * c2))
                    };
                    if !pass {
                        ok = false;
                    }
                    if ratio > worst || witness.is_empty() {
                        worst = worst.max(ratio);
                        witness = x.clone();
                    }
                }
            }
            checks.push(HypothesisCheck {
                name: "B3-B4-limits".into(),
                passed: ok,
                worst_residual: worst,
                witness,
                detail: format!("(x,∇V)+2V > 1e3·C1 at |x| = {r_small:e} and < 1e-2·C2 at |x| = {r_big:e}"),
            });
        }

        if let Some(d) = self.decay {
            let exponent_ok = d.beta > 1.0 && d.r0 >= 1.0 && d.m0 > 0.0;
            checks.push(HypothesisCheck {
                name: "V2-exponent".into(),
                passed: exponent_ok,
                worst_residual: if exponent_ok {
                    0.0
                } else {
                    (1.0 - d.beta).max(1.0 - d.r0).max(0.0)
                },
                witness: vec![],
                detail: format!(
                    "requires beta > 1, r0 >= 1, m0 > 0 (beta = {}, r0 = {}, m0 = {})",
                    d.beta, d.r0, d.m0
                ),
            });
            let mut decay = Worst::new();
            for scale in [1.0, 10.0, 100.0] {
                for theta in &dirs {
                    let x: Vec<f64> = theta.iter().map(|v| v * d.r0 * scale).collect();
                    let g = self.eval_gradient(&x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                    let lhs = norm(&x).powf(d.beta + 1.0) * norm(&g);
                    decay.update((lhs / d.m0 - 1.0).max(0.0), &x);
                }
            }
            checks.push(decay.into_check(
                "V2-decay",
                DECAY_SLACK,
                true,
                &format!("|x|^(beta+1)|∇V| <= M0 = {} for |x| >= r0 = {}", d.m0, d.r0),
            ));
        }

        HypothesisReport {
            profile: self.profile_name(),
            alpha: self.alpha,
            dimension: self.dimension,
            c1,
            c2,
            checks,
        }
    }
}

struct Worst {
    value: f64,
    witness: Vec<f64>,
    nan: bool,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: 0.0,
            witness: vec![],
            nan: false,
        }
    }

    fn update(&mut self, residual: f64, x: &[f64]) {
        if residual.is_nan() {
            self.nan = true;
            self.witness = x.to_vec();
            return;
        }
        if residual > self.value || self.witness.is_empty() {
            self.value = self.value.max(residual);
            self.witness = x.to_vec();
        }
    }

    fn into_check(self, name: &str, tol: f64, extra: bool, detail: &str) -> HypothesisCheck {
        HypothesisCheck {
            name: name.into(),
            passed: extra && !self.nan && self.value <= tol,
            worst_residual: if self.nan { f64::NAN } else { self.value },
            witness: self.witness,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub witness: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub profile: String,
    pub alpha: f64,
    pub dimension: usize,
    pub c1: f64,
    pub c2: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Deterministic sphere sample. In the plane: equally spaced angles starting
/// at the first axis. In higher dimension: the `2N` coordinate poles followed
/// by Halton points pushed through Box-Muller and normalized.
pub fn sphere_samples_for(dimension: usize, count: usize) -> Vec<Vec<f64>> {
    if dimension == 2 {
        return (0..count)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
    }
    let mut out = Vec::with_capacity(count);
    'poles: for k in 0..dimension {
        for s in [1.0, -1.0] {
            if out.len() == count {
                break 'poles;
            }
            let mut v = vec![0.0; dimension];
            v[k] = s;
            out.push(v);
        }
    }
    let primes = first_primes(2 * dimension);
    let mut index = 1u64;
    while out.len() < count {
        let mut v = Vec::with_capacity(dimension);
        for k in 0..dimension {
            let u1 = halton(index, primes[2 * k]).max(1e-12);
            let u2 = halton(index, primes[2 * k + 1]);
            v.push((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos());
        }
        index += 1;
        let n = norm(&v);
        if n > 1e-9 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().all(|p| !candidate.is_multiple_of(*p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
