//! Antisymmetric loops with pinned endpoints, stored on the half interval.
//!
//! A loop on `[0, 1]` with `q(t + 1/2) = −q(t)` and `q(0) = q(1) = R·e` is
//! fully determined by its values on `[0, 1/2]`. Only those `n + 1` nodes are
//! stored (`Δt = 1/(2n)`); the antisymmetric half is implied, so no operation
//! can produce a trace that breaks the symmetry.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{OrbitError, Result};
use crate::potential::PotentialSpec;
use crate::vecops::{dist, norm, norm_sq};

/// Tolerance on `|e| = 1`.
const UNIT_TOL: f64 = 1e-12;
pub const DEFAULT_NODES: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricLoop {
    dimension: usize,
    n: usize,
    radius: f64,
    direction: Vec<f64>,
    /// `(n + 1) × dimension`, row major.
    nodes: Vec<f64>,
}

impl SymmetricLoop {
    /// Builds a loop from its `n − 1` interior half-interval nodes (flat,
    /// `(n − 1) × N`). The endpoints `R·e` and `−R·e` are added here.
    pub fn new(dimension: usize, n: usize, radius: f64, direction: &[f64], interior: &[f64]) -> Result<Self> {
        if dimension < 2 {
            return Err(OrbitError::InvalidInput(format!(
                "dimension must be >= 2, got {dimension}"
            )));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(OrbitError::InvalidInput(format!("n must be even and >= 8, got {n}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(OrbitError::InvalidInput(format!(
                "endpoint radius must be > 0, got {radius}"
            )));
        }
        if direction.len() != dimension {
            return Err(OrbitError::InvalidInput("direction has wrong dimension".into()));
        }
        let en = norm(direction);
        if (en - 1.0).abs() > UNIT_TOL {
            return Err(OrbitError::DirectionNotUnit { norm: en });
        }
        if interior.len() != (n - 1) * dimension {
            return Err(OrbitError::EndpointMismatch(format!(
                "expected {} interior coordinates, got {}",
                (n - 1) * dimension,
                interior.len()
            )));
        }
        let mut nodes = Vec::with_capacity((n + 1) * dimension);
        nodes.extend(direction.iter().map(|v| radius * v));
        nodes.extend_from_slice(interior);
        nodes.extend(direction.iter().map(|v| -radius * v));
        let lp = Self {
            dimension,
            n,
            radius,
            direction: direction.to_vec(),
            nodes,
        };
        lp.check_nodes()?;
        Ok(lp)
    }

    /// Samples `path(t)` at the interior nodes `t_j = j/(2n)`, `0 < j < n`.
    pub fn from_fn<F>(dimension: usize, n: usize, radius: f64, direction: &[f64], path: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let dt = 1.0 / (2 * n) as f64;
        let mut interior = Vec::with_capacity((n - 1).max(1) * dimension);
        for j in 1..n {
            let p = path(j as f64 * dt);
            if p.len() != dimension {
                return Err(OrbitError::InvalidInput("path returned wrong dimension".into()));
            }
            interior.extend(p);
        }
        Self::new(dimension, n, radius, direction, &interior)
    }

    fn check_nodes(&self) -> Result<()> {
        for j in 1..self.n {
            let p = self.node(j);
            if !p.iter().all(|v| v.is_finite()) {
                return Err(OrbitError::InvalidInput(format!("non-finite node at index {j}")));
            }
            if !(norm_sq(p) > 0.0) {
                return Err(OrbitError::CollisionNode { index: j });
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of half-interval steps.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Parameter step `Δt = 1/(2n)`.
    pub fn dt(&self) -> f64 {
        1.0 / (2 * self.n) as f64
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dimension..(j + 1) * self.dimension]
    }

    /// All `n + 1` half-interval nodes, row major.
    pub fn half_nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Free coordinates: the interior nodes `1..n`, row major.
    pub fn interior(&self) -> &[f64] {
        &self.nodes[self.dimension..self.n * self.dimension]
    }

    /// Copy-and-replace of the interior nodes; endpoints stay pinned.
    pub fn with_interior(&self, interior: &[f64]) -> Result<Self> {
        Self::new(self.dimension, self.n, self.radius, &self.direction, interior)
    }

    /// The `2n + 1` points of the full loop on `[0, 1]`:
    /// `trace[n + j] = −trace[j]`.
    pub fn full_trace(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.n + 1);
        for j in 0..=self.n {
            out.push(self.node(j).to_vec());
        }
        for j in 1..=self.n {
            out.push(self.node(j).iter().map(|v| -v).collect());
        }
        out
    }

    /// Smallest `|q_j|` over all nodes.
    pub fn min_radius(&self) -> f64 {
        (0..=self.n).map(|j| norm(self.node(j))).fold(f64::INFINITY, f64::min)
    }

    /// `∫₀¹|q̇|²dt` by forward differences, twice the half-interval sum.
    pub fn dirichlet_energy(&self) -> f64 {
        dirichlet_of_half_nodes(&self.nodes, self.dimension)
    }

    /// Trapezoid rule for `∫₀¹ V(q(t)) dt` on the periodic full trace.
    pub fn integral_of_potential(&self, spec: &PotentialSpec) -> Result<f64> {
        self.integrate(spec, |spec, x| spec.eval_potential(x))
    }

    /// Periodic trapezoid quadrature of `h(q(t))` over the full trace.
    pub fn integrate<F>(&self, spec: &PotentialSpec, h: F) -> Result<f64>
    where
        F: Fn(&PotentialSpec, &[f64]) -> Result<f64>,
    {
        let mut neg = vec![0.0; self.dimension];
        let mut sum = 0.0;
        for j in 0..self.n {
            let p = self.node(j);
            for (o, v) in neg.iter_mut().zip(p) {
                *o = -v;
            }
            sum += h(spec, p)? + h(spec, &neg)?;
        }
        Ok(sum * self.dt())
    }

    /// Writes the half interval as CSV: a `#` header with the loop metadata,
    /// a column header, then one row `t, x1..xN` per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let e: Vec<String> = self.direction.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(
            s,
            "# R={} n={} N={} e={}",
            fmt_f64(self.radius),
            self.n,
            self.dimension,
            e.join(";")
        )
        .unwrap();
        let cols: Vec<String> = (1..=self.dimension).map(|k| format!("x{k}")).collect();
        writeln!(s, "t,{}", cols.join(",")).unwrap();
        let dt = self.dt();
        for j in 0..=self.n {
            let row: Vec<String> = self.node(j).iter().map(|v| fmt_f64(*v)).collect();
            writeln!(s, "{},{}", fmt_f64(j as f64 * dt), row.join(",")).unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the format produced by [`SymmetricLoop::write_csv`]. The stored
    /// endpoints must match `±R·e`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| OrbitError::InvalidInput("empty loop CSV".into()))??;
        let meta = header
            .strip_prefix('#')
            .ok_or_else(|| OrbitError::InvalidInput("missing '#' metadata header".into()))?;
        let (mut radius, mut n, mut dim, mut dir) = (None, None, None, None);
        for field in meta.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| OrbitError::InvalidInput(format!("bad header field '{field}'")))?;
            match k {
                "R" => radius = Some(parse_f64(v)?),
                "n" => n = Some(parse_usize(v)?),
                "N" => dim = Some(parse_usize(v)?),
                "e" => dir = Some(v.split(';').map(parse_f64).collect::<Result<Vec<_>>>()?),
                _ => {}
            }
        }
        let (radius, n, dim, dir) = match (radius, n, dim, dir) {
            (Some(r), Some(n), Some(d), Some(e)) => (r, n, d, e),
            _ => return Err(OrbitError::InvalidInput("header needs R, n, N and e".into())),
        };
        let _columns = lines.next();
        let mut nodes = Vec::with_capacity((n + 1) * dim);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
            if vals.len() != dim + 1 {
                return Err(OrbitError::InvalidInput(format!(
                    "row has {} columns, expected {}",
                    vals.len(),
                    dim + 1
                )));
            }
            nodes.extend_from_slice(&vals[1..]);
        }
        if nodes.len() != (n + 1) * dim {
            return Err(OrbitError::InvalidInput(format!(
                "expected {} rows, got {}",
                n + 1,
                nodes.len() / dim.max(1)
            )));
        }
        let first = &nodes[..dim];
        let last = &nodes[n * dim..];
        let pin_err = first
            .iter()
            .zip(&dir)
            .chain(last.iter().zip(dir.iter()))
            .enumerate()
            .map(|(k, (a, b))| {
                if k < dim {
                    (a - radius * b).abs()
                } else {
                    (a + radius * b).abs()
                }
            })
            .fold(0.0, f64::max);
        if pin_err > 1e-12 * radius.max(1.0) {
            return Err(OrbitError::EndpointMismatch(format!(
                "stored endpoints differ from ±R·e by {pin_err:e}"
            )));
        }
        Self::new(dim, n, radius, &dir, &nodes[dim..n * dim])
    }
}

/// Forward-difference Dirichlet energy of the full antisymmetric loop whose
/// half-interval nodes are `nodes` (row major, `n + 1` rows).
pub(crate) fn dirichlet_of_half_nodes(nodes: &[f64], dimension: usize) -> f64 {
    let rows = nodes.len() / dimension;
    let n = rows - 1;
    let mut sum = 0.0;
    for j in 0..n {
        let d = dist(
            &nodes[(j + 1) * dimension..(j + 2) * dimension],
            &nodes[j * dimension..(j + 1) * dimension],
        );
        sum += d * d;
    }
    2.0 * sum * (2 * n) as f64
}

/// 17 significant digits: round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| OrbitError::InvalidInput(format!("bad number '{s}': {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| OrbitError::InvalidInput(format!("bad integer '{s}': {e}")))
}

/// Samples of the circle `R(cos 2πt, sin 2πt, 0, …)`, a member of the loop
/// space for every `R`.
pub fn circle_loop(dimension: usize, n: usize, radius: f64) -> Result<SymmetricLoop> {
    let mut e = vec![0.0; dimension];
    e[0] = 1.0;
    SymmetricLoop::from_fn(dimension, n, radius, &e, |t| {
        let mut p = vec![0.0; dimension];
        let th = 2.0 * std::f64::consts::PI * t;
        p[0] = radius * th.cos();
        p[1] = radius * th.sin();
        p
    })
}
