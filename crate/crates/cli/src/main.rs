//! `hyperorbit`: hypothesis checks, single solves, continuation sweeps and
//! closed-form oracles.
//!
//! Exit codes: 0 pass, 1 hypothesis or verdict failure, 2 configuration or
//! input error, 3 collision abort, 4 non-convergence (best-so-far artifacts
//! are still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hyperorbit::config::RunConfig;
use hyperorbit::diagnostics::{continuation_sweep, geometric_schedule, SweepOptions};
use hyperorbit::dynamics::{circular_oracle, KeplerHyperbola};
use hyperorbit::json::{to_json, SCHEMA_VERSION};
use hyperorbit::minimize::{Solution, SolveStatus};
use hyperorbit::potential::HypothesisReport;
use hyperorbit::rescale::{reconstruct_orbit, OrbitSegment, PeriodEstimate, SignPolicy};
use hyperorbit::seed::{solve_seed, SeedSolution};
use hyperorbit::symloop::fmt_f64 as fmt;
use hyperorbit::{minimize_constrained, OrbitError, PotentialSpec, SolveReport, SolverConfig};
use log::info;
use serde::Serialize;

const DEFAULT_SAMPLES: usize = 256;

#[derive(Parser)]
#[command(
    name = "hyperorbit",
    version,
    about = "Hyperbolic orbits of repulsive homogeneous potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the potential hypotheses and print the report.
    CheckPotential {
        config: PathBuf,
        #[arg(long = "alpha-override")]
        alpha_override: Option<f64>,
    },
    /// Seed, minimize and rescale at one radius.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long = "R", allow_negative_numbers = true)]
        radius: Option<f64>,
        /// Initial amplitude bracket for the seed, `lo,hi`.
        #[arg(long = "seed-bracket", value_parser = parse_bracket)]
        seed_bracket: Option<(f64, f64)>,
    },
    /// Continuation over R = R0·2^k, k = 0..=doublings.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long = "R0", default_value_t = 4.0, allow_negative_numbers = true)]
        r0: f64,
        #[arg(long, default_value_t = 4)]
        doublings: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Closed-form reference orbits.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long = "H", allow_negative_numbers = true)]
    energy: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "alpha-override")]
    alpha_override: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long = "tol-kkt")]
    tol_kkt: Option<f64>,
    #[arg(long = "tol-constraint")]
    tol_constraint: Option<f64>,
}

#[derive(Subcommand)]
enum OracleKind {
    /// Repulsive Kepler hyperbola.
    Kepler {
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        angular_momentum: f64,
        #[arg(long = "H", default_value_t = 0.5)]
        energy: f64,
        #[arg(long, default_value_t = 201)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Circular solution of a strong-force potential.
    Circle {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long = "H", default_value_t = 1.0, allow_negative_numbers = true)]
        energy: f64,
        #[arg(long, default_value_t = 257)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<OrbitError> for Failure {
    fn from(e: OrbitError) -> Self {
        let code = match &e {
            OrbitError::Precondition(_) => 1,
            OrbitError::CollisionAbort { .. } | OrbitError::NearCollision { .. } => 3,
            OrbitError::MaxIterations { .. } => 4,
            _ => 2,
        };
        Failure::new(code, e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::new(2, e)
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORBIT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::CheckPotential { config, alpha_override } => cmd_check_potential(&config, alpha_override),
        Command::Solve {
            config,
            common,
            radius,
            seed_bracket,
        } => cmd_solve(&config, &common, radius, seed_bracket),
        Command::Sweep {
            config,
            common,
            r0,
            doublings,
            jobs,
        } => cmd_sweep(&config, &common, r0, doublings, jobs),
        Command::Oracle { kind } => cmd_oracle(kind),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path, alpha_override: Option<f64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| Failure::new(2, e))?;
    if let Some(a) = alpha_override {
        cfg.alpha = a;
    }
    Ok(cfg)
}

fn build_potential(cfg: &RunConfig) -> Result<PotentialSpec, Failure> {
    cfg.potential().map_err(|e| Failure::new(2, e))
}

/// Fails with exit 1 when the declared hypotheses do not hold.
fn require_hypotheses(report: &HypothesisReport) -> Result<(), Failure> {
    if report.all_passed() {
        return Ok(());
    }
    let lines: Vec<String> = report
        .failures()
        .iter()
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    Err(Failure::new(
        1,
        anyhow::anyhow!("hypotheses failed:\n  {}", lines.join("\n  ")),
    ))
}

fn cmd_check_potential(path: &Path, alpha_override: Option<f64>) -> CmdResult {
    let cfg = load_config(path, alpha_override)?;
    let spec = build_potential(&cfg)?;
    let report = spec.check_hypotheses(cfg.samples.unwrap_or(DEFAULT_SAMPLES));
    print!("{}", to_json(&report));
    require_hypotheses(&report)?;
    Ok(0)
}

fn solver_config(cfg: &RunConfig, common: &Common) -> Result<SolverConfig, Failure> {
    let mut solver = cfg.solver();
    if let Some(v) = common.tol_kkt {
        solver.tol_kkt = v;
    }
    if let Some(v) = common.tol_constraint {
        solver.tol_constraint = v;
    }
    solver.validate().map_err(|e| Failure::new(2, e))?;
    Ok(solver)
}

fn energy_of(cfg: &RunConfig, common: &Common) -> Result<f64, Failure> {
    let h = common.energy.unwrap_or(cfg.energy);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Failure::new(2, anyhow::anyhow!("H must be > 0, got {h}")));
    }
    Ok(h)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::from)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::from)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    schema: u32,
    config: &'a RunConfig,
    radius: f64,
    energy_h: f64,
    nodes: usize,
    seed: &'a SeedSolution,
    report: &'a SolveReport,
    period: Option<&'a PeriodEstimate>,
    orbit_error: Option<String>,
    max_interior_energy_residual: Option<f64>,
    min_orbit_radius: Option<f64>,
    exit_code: u8,
}

fn cmd_solve(path: &Path, common: &Common, radius: Option<f64>, bracket: Option<(f64, f64)>) -> CmdResult {
    let mut cfg = load_config(path, common.alpha_override)?;
    let spec = build_potential(&cfg)?;
    let radius = radius
        .or(cfg.radius)
        .ok_or_else(|| Failure::new(2, anyhow::anyhow!("radius R missing: pass --R or set R in the config")))?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Failure::new(2, anyhow::anyhow!("R must be > 0, got {radius}")));
    }
    let energy = energy_of(&cfg, common)?;
    let n = common.n.unwrap_or(cfg.n);
    cfg.radius = Some(radius);
    cfg.energy = energy;
    cfg.n = n;
    let solver = solver_config(&cfg, common)?;
    let e = cfg.direction().map_err(|e| Failure::new(2, e))?;
    spec.require_solver_hypotheses()?;

    let seed = solve_seed(radius, &e, energy, &spec, n, bracket)?;
    info!(
        "seed amplitude {:.6e}, |g - H|/H = {:.3e}",
        seed.amplitude, seed.relative_residual
    );
    let Solution { minimizer, report } = minimize_constrained(&seed.seed, &spec, energy, &solver)?;
    let exit_code = match report.status {
        SolveStatus::Converged if report.collision_floor_active => 3,
        SolveStatus::Converged => 0,
        SolveStatus::CollisionAbort => 3,
        SolveStatus::MaxIterations => 4,
    };
    let orbit = reconstruct_orbit(&minimizer, &spec, energy, SignPolicy::Magnitude);
    let period = hyperorbit::rescale::compute_period(&minimizer, &spec, energy, SignPolicy::Magnitude).ok();

    create_out(&common.out)?;
    let mut loop_csv = Vec::new();
    minimizer.write_csv(&mut loop_csv)?;
    write_file(&common.out.join("loop.csv"), &loop_csv)?;
    if let Ok(seg) = &orbit {
        write_orbit(&common.out.join("orbit.csv"), seg)?;
        write_file(&common.out.join("orbit.json"), seg.metadata_json().as_bytes())?;
    }
    let output = SolveOutput {
        schema: SCHEMA_VERSION,
        config: &cfg,
        radius,
        energy_h: energy,
        nodes: n,
        seed: &seed,
        report: &report,
        period: period.as_ref(),
        orbit_error: orbit.as_ref().err().map(|e| e.to_string()),
        max_interior_energy_residual: orbit.as_ref().ok().map(OrbitSegment::max_interior_energy_residual),
        min_orbit_radius: orbit.as_ref().ok().map(OrbitSegment::min_radius),
        exit_code,
    };
    let text = to_json(&output);
    write_file(&common.out.join("solve.json"), text.as_bytes())?;
    print!("{text}");
    match exit_code {
        0 => {}
        3 => eprintln!("collision floor reached (min radius {:.3e})", report.min_radius),
        _ => eprintln!(
            "not converged: |g - H|/H = {:.3e}, kkt = {:.3e} (best-so-far artifacts written)",
            report.constraint_residual, report.kkt_residual
        ),
    }
    Ok(exit_code)
}

fn write_orbit(path: &Path, seg: &OrbitSegment) -> Result<(), Failure> {
    let mut buf = Vec::new();
    seg.write_csv(&mut buf)?;
    write_file(path, &buf)
}

fn cmd_sweep(path: &Path, common: &Common, r0: f64, doublings: usize, jobs: usize) -> CmdResult {
    let mut cfg = load_config(path, common.alpha_override)?;
    let spec = build_potential(&cfg)?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Failure::new(2, anyhow::anyhow!("R0 must be > 0, got {r0}")));
    }
    let energy = energy_of(&cfg, common)?;
    cfg.energy = energy;
    cfg.n = common.n.unwrap_or(cfg.n);
    let e = cfg.direction().map_err(|e| Failure::new(2, e))?;
    let mut opts = SweepOptions {
        nodes: cfg.n,
        solver: solver_config(&cfg, common)?,
        jobs,
        ..Default::default()
    };
    if let Some(w) = cfg.window {
        opts.window = w;
    }
    if let Some(eta) = cfg.eta {
        opts.eta_grid = vec![eta, 1.5 * eta, 2.0 * eta, 2.5 * eta];
    }
    if let Some(s) = cfg.samples {
        opts.sphere_samples = s;
    }
    spec.require_solver_hypotheses()?;
    let schedule = geometric_schedule(r0, doublings);
    let result = continuation_sweep(&spec, energy, &e, &schedule, &opts)?;

    create_out(&common.out)?;
    for (entry, seg) in result.entries.iter().zip(&result.segments) {
        if let Some(seg) = seg {
            write_orbit(&common.out.join(format!("orbit_R{}.csv", entry.radius)), seg)?;
        }
    }
    let text = to_json(&result);
    write_file(&common.out.join("sweep.json"), text.as_bytes())?;
    print!("{text}");
    if result.verdicts.hyperbolicity {
        Ok(0)
    } else {
        eprintln!("hyperbolicity proxy verdict: FAIL");
        Ok(1)
    }
}

#[derive(Serialize)]
struct KeplerOutput {
    schema: u32,
    kind: &'static str,
    hyperbola: KeplerHyperbola,
    periapsis: f64,
    scattering_angle: f64,
    lenz_identity_residual: f64,
}

#[derive(Serialize)]
struct CircleOutput {
    schema: u32,
    kind: &'static str,
    alpha: f64,
    energy_h: f64,
    radius: f64,
    omega: f64,
    period: f64,
}

fn cmd_oracle(kind: OracleKind) -> CmdResult {
    match kind {
        OracleKind::Kepler {
            mass,
            delta,
            angular_momentum,
            energy,
            samples,
            out,
        } => {
            let h = KeplerHyperbola::new(mass, delta, angular_momentum, energy)?;
            if let Some(dir) = out {
                create_out(&dir)?;
                let mut csv = String::from("zeta,r,x,y\n");
                let count = samples.max(2);
                for k in 0..count {
                    // stay strictly inside the asymptotes
                    let zeta = h.zeta_inf * 0.98 * (2.0 * k as f64 / (count - 1) as f64 - 1.0);
                    let r = h.radius(zeta)?;
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt(zeta),
                        fmt(r),
                        fmt(r * zeta.cos()),
                        fmt(r * zeta.sin())
                    ));
                }
                write_file(&dir.join("kepler.csv"), csv.as_bytes())?;
            }
            let output = KeplerOutput {
                schema: SCHEMA_VERSION,
                kind: "kepler",
                periapsis: h.periapsis(),
                scattering_angle: h.scattering_angle(),
                lenz_identity_residual: h.lenz_identity_residual(),
                hyperbola: h,
            };
            print!("{}", to_json(&output));
            Ok(0)
        }
        OracleKind::Circle {
            alpha,
            energy,
            samples,
            out,
        } => {
            let c = circular_oracle(alpha, energy).map_err(|e| Failure::new(2, e))?;
            if let Some(dir) = out {
                create_out(&dir)?;
                write_orbit(&dir.join("circle.csv"), &c.segment(samples, 1.0, 2)?)?;
            }
            let output = CircleOutput {
                schema: SCHEMA_VERSION,
                kind: "circle",
                alpha,
                energy_h: energy,
                radius: c.radius,
                omega: c.omega,
                period: c.period(),
            };
            print!("{}", to_json(&output));
            Ok(0)
        }
    }
}
