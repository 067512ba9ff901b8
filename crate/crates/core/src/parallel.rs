//! Discrete parallel operator built from traced landing points.
//!
//! Each node stores a forward and a backward bilinear stencil on the cell
//! containing its landing point, which fuses the permutation and the
//! interpolation of `P_f` and `P_b` into one gather.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::fieldline::{trace, MagneticField, Tolerance, TraceDomain, TraceStatus};
use crate::grid::Grid2D;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<T> {
    pub corners: [usize; 4],
    pub weights: [T; 4],
}

impl<T: Real> Stencil<T> {
    pub fn node(k: usize) -> Self {
        Stencil { corners: [k; 4], weights: [T::one(), T::zero(), T::zero(), T::zero()] }
    }

    #[inline]
    pub fn gather(&self, u: &[T]) -> T {
        self.weights[0] * u[self.corners[0]]
            + self.weights[1] * u[self.corners[1]]
            + self.weights[2] * u[self.corners[2]]
            + self.weights[3] * u[self.corners[3]]
    }
}

/// Fractional index snapped to an integer when within roundoff of it.
fn cell<T: Real>(coord: T, origin: T, d: T, n: usize) -> (usize, T) {
    let mut f = (coord - origin) / d;
    let r = f.round();
    if (f - r).abs() < T::lit(1e-9) {
        f = r;
    }
    let max = T::from_count(n - 2);
    let i = f.floor().max(T::zero()).min(max);
    let t = (f - i).max(T::zero()).min(T::one());
    (i.to_usize().unwrap_or(0), t)
}

/// Bilinear stencil for the point `(x, y)` inside the grid rectangle.
pub fn bilinear_stencil<T: Real>(grid: &Grid2D<T>, x: T, y: T) -> Stencil<T> {
    let (i, tx) = cell(x, grid.gx.x_left, grid.gx.dx, grid.nx());
    let (j, ty) = cell(y, grid.gy.x_left, grid.gy.dx, grid.ny());
    let one = T::one();
    Stencil {
        corners: [grid.idx(i, j), grid.idx(i + 1, j), grid.idx(i, j + 1), grid.idx(i + 1, j + 1)],
        weights: [(one - tx) * (one - ty), tx * (one - ty), (one - tx) * ty, tx * ty],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelMap<T> {
    pub grid: Grid2D<T>,
    pub forward: Vec<Stencil<T>>,
    pub backward: Vec<Stencil<T>>,
}

impl<T: Real> ParallelMap<T> {
    /// `P_f = P_b = I`.
    pub fn identity(grid: &Grid2D<T>) -> Self {
        let s: Vec<Stencil<T>> = (0..grid.len()).map(Stencil::node).collect();
        ParallelMap { grid: grid.clone(), forward: s.clone(), backward: s }
    }

    pub fn stencils(&self, dir: Direction) -> &[Stencil<T>] {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    /// Dense `P_f` or `P_b`.
    pub fn to_dense(&self, dir: Direction) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut p = DMatrix::zeros(n, n);
        for (k, s) in self.stencils(dir).iter().enumerate() {
            for c in 0..4 {
                p[(k, s.corners[c])] += s.weights[c].to_f64_lossy();
            }
        }
        p
    }

    /// Writes the text cache (see the crate README for the format).
    pub fn write(&self, path: &Path, span: T, tol: Tolerance<T>) -> Result<()> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let g = &self.grid;
        writeln!(f, "aniso-parallel-map 1").map_err(io)?;
        writeln!(
            f,
            "grid {} {} {:e} {:e} {:e} {:e}",
            g.nx(),
            g.ny(),
            g.gx.x_left.to_f64_lossy(),
            g.gx.x_right.to_f64_lossy(),
            g.gy.x_left.to_f64_lossy(),
            g.gy.x_right.to_f64_lossy()
        )
        .map_err(io)?;
        writeln!(f, "trace {:e} {:e} {:e}", span.to_f64_lossy(), tol.abs.to_f64_lossy(), tol.rel.to_f64_lossy())
            .map_err(io)?;
        for (tag, dir) in [("f", Direction::Forward), ("b", Direction::Backward)] {
            for (k, s) in self.stencils(dir).iter().enumerate() {
                writeln!(
                    f,
                    "{tag} {k} {} {} {} {} {:e} {:e} {:e} {:e}",
                    s.corners[0],
                    s.corners[1],
                    s.corners[2],
                    s.corners[3],
                    s.weights[0].to_f64_lossy(),
                    s.weights[1].to_f64_lossy(),
                    s.weights[2].to_f64_lossy(),
                    s.weights[3].to_f64_lossy()
                )
                .map_err(io)?;
            }
        }
        f.flush().map_err(io)
    }

    /// Reads a cache written by [`ParallelMap::write`]; the grid must match.
    pub fn read(path: &Path, grid: &Grid2D<T>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let n = grid.len();
        let mut forward = vec![None; n];
        let mut backward = vec![None; n];
        for (ln, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            let lineno = ln + 1;
            match tok.first().copied() {
                Some("aniso-parallel-map") if ln == 0 => {
                    if tok.get(1) != Some(&"1") {
                        return Err(perr(lineno, "unsupported map version".into()));
                    }
                }
                _ if ln == 0 => return Err(perr(lineno, "missing map header".into())),
                Some("grid") => {
                    let dims: Vec<usize> = tok[1..3].iter().filter_map(|s| s.parse().ok()).collect();
                    if dims != [grid.nx(), grid.ny()] {
                        return Err(perr(lineno, format!("map is for a {:?} grid", dims)));
                    }
                }
                Some("trace") => {}
                Some(tag @ ("f" | "b")) => {
                    if tok.len() != 10 {
                        return Err(perr(lineno, "expected 10 fields".into()));
                    }
                    let ints: Vec<usize> = tok[1..6]
                        .iter()
                        .map(|s| s.parse().map_err(|_| perr(lineno, format!("bad index {s}"))))
                        .collect::<Result<_>>()?;
                    let ws: Vec<f64> = tok[6..10]
                        .iter()
                        .map(|s| s.parse().map_err(|_| perr(lineno, format!("bad weight {s}"))))
                        .collect::<Result<_>>()?;
                    if ints.iter().any(|&v| v >= n) {
                        return Err(perr(lineno, "index out of range".into()));
                    }
                    let s = Stencil {
                        corners: [ints[1], ints[2], ints[3], ints[4]],
                        weights: [T::lit(ws[0]), T::lit(ws[1]), T::lit(ws[2]), T::lit(ws[3])],
                    };
                    let slot = if tag == "f" { &mut forward } else { &mut backward };
                    slot[ints[0]] = Some(s);
                }
                Some(other) => return Err(perr(lineno, format!("unknown record {other}"))),
                None => {}
            }
        }
        let collect = |v: Vec<Option<Stencil<T>>>| -> Result<Vec<Stencil<T>>> {
            v.into_iter()
                .enumerate()
                .map(|(k, s)| s.ok_or_else(|| perr(0, format!("node {k} missing"))))
                .collect()
        };
        Ok(ParallelMap { grid: grid.clone(), forward: collect(forward)?, backward: collect(backward)? })
    }
}

/// Traces every node forward and backward by `span` and records bilinear
/// landing stencils. Any failed node aborts the build.
pub fn build_parallel_map<T: Real, F: MagneticField<T> + ?Sized>(
    grid: &Grid2D<T>,
    field: &F,
    span: T,
    tol: Tolerance<T>,
    y_periodic: bool,
) -> Result<ParallelMap<T>> {
    let domain = TraceDomain {
        x: (grid.gx.x_left, grid.gx.x_right),
        y: (grid.gy.x_left, grid.gy.x_right),
        y_periodic,
    };
    let pairs: Vec<(Stencil<T>, Stencil<T>)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.coords(k);
            let r = trace(field, (x, y), span, tol, &domain).map_err(|e| match e {
                Error::TraceFailed { reason, .. } => {
                    Error::TraceFailed { node: k, x: x.to_f64_lossy(), y: y.to_f64_lossy(), reason }
                }
                other => other,
            })?;
            if r.status == TraceStatus::LeftDomain {
                return Err(Error::TraceFailed {
                    node: k,
                    x: x.to_f64_lossy(),
                    y: y.to_f64_lossy(),
                    reason: format!("left the domain (landed at {:?} / {:?})", r.x_plus, r.x_minus),
                });
            }
            Ok((
                bilinear_stencil(grid, r.x_plus.0, r.x_plus.1),
                bilinear_stencil(grid, r.x_minus.0, r.x_minus.1),
            ))
        })
        .collect::<Result<_>>()?;
    let (forward, backward) = pairs.into_iter().unzip();
    Ok(ParallelMap { grid: grid.clone(), forward, backward })
}

pub fn apply_map<T: Real>(map: &ParallelMap<T>, dir: Direction, u: &[T]) -> Result<Vec<T>> {
    check_len(map.grid.len(), u.len())?;
    Ok(map.stencils(dir).iter().map(|s| s.gather(u)).collect())
}

#[derive(Clone, Debug)]
pub struct NormReport {
    /// Nodes with a negative weight or weights not summing to one.
    pub weight_violations: Vec<(Direction, usize)>,
    pub forward_norm: f64,
    pub backward_norm: f64,
    /// Whether the norms came from a dense SVD (else power iteration).
    pub dense: bool,
    pub passed: bool,
}

/// Largest system solved with a dense SVD in [`operator_norm_check`].
pub const DENSE_NORM_CAP: usize = 1600;

/// Estimates `‖P_f‖₂` and `‖P_b‖₂` (dense SVD up to [`DENSE_NORM_CAP`]
/// unknowns, else `samples` power iterations on `PᵀP`) and audits weights.
pub fn operator_norm_check<T: Real>(map: &ParallelMap<T>, samples: usize) -> NormReport {
    let mut weight_violations = Vec::new();
    for dir in [Direction::Forward, Direction::Backward] {
        for (k, s) in map.stencils(dir).iter().enumerate() {
            let sum: f64 = s.weights.iter().map(|w| w.to_f64_lossy()).sum();
            if s.weights.iter().any(|&w| w < T::zero()) || (sum - 1.0).abs() > 1e-12 {
                weight_violations.push((dir, k));
            }
        }
    }
    let n = map.grid.len();
    let dense = n <= DENSE_NORM_CAP;
    let norm = |dir: Direction| -> f64 {
        if dense {
            map.to_dense(dir).singular_values().max()
        } else {
            power_norm(map, dir, samples.max(1))
        }
    };
    let forward_norm = norm(Direction::Forward);
    let backward_norm = norm(Direction::Backward);
    let passed = weight_violations.is_empty() && forward_norm <= 1.0 + 1e-10 && backward_norm <= 1.0 + 1e-10;
    NormReport { weight_violations, forward_norm, backward_norm, dense, passed }
}

fn power_norm<T: Real>(map: &ParallelMap<T>, dir: Direction, iters: usize) -> f64 {
    let n = map.grid.len();
    let st = map.stencils(dir);
    // Deterministic, non-degenerate start vector.
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * ((k as f64) * 0.7548776662).fract()).collect();
    let mut sigma2 = 0.0;
    for _ in 0..iters {
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= nv);
        let pv: Vec<f64> = st
            .iter()
            .map(|s| (0..4).map(|c| s.weights[c].to_f64_lossy() * v[s.corners[c]]).sum())
            .collect();
        let mut w = vec![0.0; n];
        for (s, &p) in st.iter().zip(&pv) {
            for c in 0..4 {
                w[s.corners[c]] += s.weights[c].to_f64_lossy() * p;
            }
        }
        sigma2 = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    sigma2.max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParallelPenalty<T> {
    pub tau_par: T,
    pub kappa_par: T,
}

/// `τ∥ = L_x L_y / sqrt(Δx Δy)`.
pub fn default_tau_par<T: Real>(grid: &Grid2D<T>) -> T {
    grid.gx.length() * grid.gy.length() / (grid.gx.dx * grid.gy.dx).sqrt()
}

impl<T: Real> ParallelPenalty<T> {
    pub fn new(grid: &Grid2D<T>, kappa_par: T) -> Self {
        ParallelPenalty { tau_par: default_tau_par(grid), kappa_par }
    }
}

/// `P∥ u = -τ∥ κ∥ (u - ½(P_f u + P_b u))`.
pub fn apply_parallel_operator<T: Real>(map: &ParallelMap<T>, penalty: &ParallelPenalty<T>, u: &[T]) -> Result<Vec<T>> {
    check_len(map.grid.len(), u.len())?;
    let c = penalty.tau_par * penalty.kappa_par;
    let half = T::lit(0.5);
    Ok(map
        .forward
        .iter()
        .zip(&map.backward)
        .zip(u)
        .map(|((f, b), &v)| -c * (v - half * (f.gather(u) + b.gather(u))))
        .collect())
}

/// `u = (u_half + ½ a (w_b + w_f)) / (1 + a)` with `a = dt τ∥ κ∥`.
pub fn parallel_update<T: Real>(u_half: &[T], map: &ParallelMap<T>, penalty: &ParallelPenalty<T>, dt: T) -> Result<Vec<T>> {
    check_len(map.grid.len(), u_half.len())?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(update_with(u_half, &map.forward, &map.backward, dt * penalty.tau_par * penalty.kappa_par))
}

pub(crate) fn update_with<T: Real>(u: &[T], fwd: &[Stencil<T>], bwd: &[Stencil<T>], a: T) -> Vec<T> {
    let half = T::lit(0.5);
    let inv = T::one() / (T::one() + a);
    fwd.iter()
        .zip(bwd)
        .zip(u)
        .map(|((f, b), &v)| (v + half * a * (b.gather(u) + f.gather(u))) * inv)
        .collect()
}
