//! Perpendicular diffusion operator `P⊥ = κ⊥(D_xx + D_yy) + SAT_x + SAT_y`.
//!
//! Dirichlet data enters only through the SAT residual `u - g`. The
//! derivative-coupling SAT terms are applied with the sign that makes
//! `A⊥ = -H P⊥` symmetric; with the default penalties it is then positive
//! semi-definite, which the implicit solve relies on.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dense;
use crate::error::{check_len, Error, Result};
use crate::grid::Grid2D;
use crate::kron::{apply_x, extend_2d, Ops2D};
use crate::sbp::{build_sbp_const, norm_weights, Order, SparseRow};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySet<T> {
    pub tau_x0: T,
    pub tau_x1: T,
    pub tau_x2: T,
    pub tau_y0: T,
    pub tau_y1: T,
    pub tau_y2: T,
}

/// Stable penalties: `τx1 = -1`, `τx0 = -(1 + τx2)`, `τy1 = -τy2 = 1/2` and
/// `τy0 = -(κ⊥ / 2Δy) max(1/h_1, 1/h_ny)` with dimensionless weights `h`.
pub fn default_penalties<T: Real>(
    grid: &Grid2D<T>,
    kappa_perp: T,
    order: Order,
    tau_x2: T,
) -> Result<PenaltySet<T>> {
    if !(tau_x2 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tau_x2 must be >= 0, got {tau_x2}")));
    }
    if !(kappa_perp >= T::zero()) {
        return Err(Error::InvalidParameter(format!("kappa_perp must be >= 0, got {kappa_perp}")));
    }
    let ny = grid.ny();
    let hy = norm_weights(order, ny.max(2 * order.boundary_rows()), grid.gy.dx);
    let hmin = hy.h[0].min(hy.h[hy.h.len() - 1]);
    let half = T::lit(0.5);
    Ok(PenaltySet {
        tau_x0: -(T::one() + tau_x2),
        tau_x1: -T::one(),
        tau_x2,
        tau_y0: -kappa_perp / (T::lit(2.0) * grid.gy.dx) / hmin,
        tau_y1: half,
        tau_y2: -half,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Dirichlet data `g(side, s, t)` where `s` is the coordinate along the side.
pub trait BoundaryData<T>: Send + Sync {
    fn value(&self, side: Side, s: T, t: T) -> T;
}

impl<T, F> BoundaryData<T> for F
where
    F: Fn(Side, T, T) -> T + Send + Sync,
{
    fn value(&self, side: Side, s: T, t: T) -> T {
        self(side, s, t)
    }
}

/// Boundary treatment in y. The x-direction is always Dirichlet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum YBoundary {
    #[default]
    Periodic,
    /// Dirichlet SAT in y with the x-penalties.
    Dirichlet,
}

#[derive(Clone)]
pub struct PerpOperator<T> {
    pub ops: Ops2D<T>,
    pub penalties: PenaltySet<T>,
    pub kappa_perp: T,
    pub y_boundary: YBoundary,
    data: Option<Arc<dyn BoundaryData<T>>>,
    // Physical norm weights and the supports of D1ᵀe_1, D1ᵀe_n.
    wx: Vec<T>,
    wy: Vec<T>,
    dx_first: Vec<(usize, T)>,
    dx_last: Vec<(usize, T)>,
    dy_first: Vec<(usize, T)>,
    dy_last: Vec<(usize, T)>,
}

impl<T: Real> std::fmt::Debug for PerpOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerpOperator")
            .field("nx", &self.ops.grid.nx())
            .field("ny", &self.ops.grid.ny())
            .field("order", &self.ops.x.order)
            .field("kappa_perp", &self.kappa_perp)
            .field("penalties", &self.penalties)
            .field("y_boundary", &self.y_boundary)
            .field("has_data", &self.data.is_some())
            .finish()
    }
}

impl<T: Real> PerpOperator<T> {
    /// Operator with default penalties (`τx2 = 0`), periodic y and no data.
    pub fn new(grid: &Grid2D<T>, order: Order, kappa_perp: T) -> Result<Self> {
        let pen = default_penalties(grid, kappa_perp, order, T::zero())?;
        Self::with_penalties(grid, order, kappa_perp, pen)
    }

    pub fn with_penalties(grid: &Grid2D<T>, order: Order, kappa_perp: T, penalties: PenaltySet<T>) -> Result<Self> {
        if !(kappa_perp >= T::zero()) || !kappa_perp.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa_perp must be >= 0, got {kappa_perp}")));
        }
        // Unit-κ stencils scaled by κ⊥, so κ⊥ = 0 is allowed.
        let ox = build_sbp_const(order, grid.nx(), grid.gx.dx, T::one())?;
        let oy = build_sbp_const(order, grid.ny(), grid.gy.dx, T::one())?;
        let ops = extend_2d(ox, oy, grid)?;
        let wx = ops.x.norm_diagonal();
        let wy = ops.y.norm_diagonal();
        let (nx, ny) = (grid.nx(), grid.ny());
        Ok(PerpOperator {
            dx_first: row_entries(&ops.x.d1.rows[0]),
            dx_last: row_entries(&ops.x.d1.rows[nx - 1]),
            dy_first: row_entries(&ops.y.d1.rows[0]),
            dy_last: row_entries(&ops.y.d1.rows[ny - 1]),
            ops,
            penalties,
            kappa_perp,
            y_boundary: YBoundary::Periodic,
            data: None,
            wx,
            wy,
        })
    }

    pub fn y_boundary(mut self, kind: YBoundary) -> Self {
        self.y_boundary = kind;
        self
    }

    pub fn boundary_data(mut self, data: Arc<dyn BoundaryData<T>>) -> Self {
        self.data = Some(data);
        self
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.ops.grid
    }

    pub fn order(&self) -> Order {
        self.ops.x.order
    }

    pub fn h_diag(&self) -> &[T] {
        self.ops.h_diag()
    }

    pub fn has_data(&self) -> bool {
        self.data.is_some()
    }

    /// Data vector at time `t`: left/right values in the first/last x-slices
    /// and, for Dirichlet y, bottom/top values in the first/last y-slots.
    /// Corner nodes take the x-side value. Zero when no provider is set.
    pub fn boundary_vector(&self, t: T) -> Vec<T> {
        let g = self.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let mut v = vec![T::zero(); g.len()];
        let Some(data) = &self.data else { return v };
        if self.y_boundary == YBoundary::Dirichlet {
            for i in 0..nx {
                let x = g.gx.point(i);
                v[i * ny] = data.value(Side::Bottom, x, t);
                v[i * ny + ny - 1] = data.value(Side::Top, x, t);
            }
        }
        for j in 0..ny {
            let y = g.gy.point(j);
            v[j] = data.value(Side::Left, y, t);
            v[(nx - 1) * ny + j] = data.value(Side::Right, y, t);
        }
        v
    }

    /// Adds `SAT_x(u, g)` to `out`. Only boundary residuals enter.
    pub fn add_sat_x(&self, u: &[T], g: Option<&[T]>, out: &mut [T]) {
        let gv = |k: usize| g.map_or(T::zero(), |g| g[k]);
        let grid = self.grid();
        let (nx, ny) = (grid.nx(), grid.ny());
        let p = &self.penalties;
        let k = self.kappa_perp;
        let (w0, wn) = (self.wx[0], self.wx[nx - 1]);
        let left = 0;
        let right = (nx - 1) * ny;
        // -τx1 κ H⁻¹ D1ᵀ B (u - g), with B = diag(-1, 0, ..., 0, 1)
        let c = -p.tau_x1 * k;
        for j in 0..ny {
            let rl = u[left + j] - gv(left + j);
            let rr = u[right + j] - gv(right + j);
            if rl == T::zero() && rr == T::zero() {
                continue;
            }
            out[left + j] = out[left + j] + p.tau_x0 * k * rl / (w0 * w0);
            out[right + j] = out[right + j] + p.tau_x0 * k * rr / (wn * wn);
            for &(i, d) in &self.dx_first {
                out[i * ny + j] = out[i * ny + j] - c * d * rl / self.wx[i];
            }
            for &(i, d) in &self.dx_last {
                out[i * ny + j] = out[i * ny + j] + c * d * rr / self.wx[i];
            }
        }
    }

    /// Adds `SAT_y(u)` (periodic) or the Dirichlet y-penalty to `out`.
    pub fn add_sat_y(&self, u: &[T], g: Option<&[T]>, out: &mut [T]) {
        let gv = |k: usize| g.map_or(T::zero(), |g| g[k]);
        let grid = self.grid();
        let (nx, ny) = (grid.nx(), grid.ny());
        let p = &self.penalties;
        let k = self.kappa_perp;
        let (w0, wn) = (self.wy[0], self.wy[ny - 1]);
        let d1 = &self.ops.y.d1;
        for i in 0..nx {
            let a = i * ny;
            let line = &u[a..a + ny];
            let o = &mut out[a..a + ny];
            match self.y_boundary {
                YBoundary::Periodic => {
                    let delta = line[0] - line[ny - 1];
                    let ddelta = d1.rows[0].dot(line) - d1.rows[ny - 1].dot(line);
                    o[0] = o[0] + p.tau_y0 * delta / w0 - p.tau_y2 * k * ddelta / w0;
                    o[ny - 1] = o[ny - 1] - p.tau_y0 * delta / wn - p.tau_y2 * k * ddelta / wn;
                    let c = -p.tau_y1 * k * delta;
                    for &(j, d) in self.dy_first.iter().chain(&self.dy_last) {
                        o[j] = o[j] + c * d / self.wy[j];
                    }
                }
                YBoundary::Dirichlet => {
                    let rb = line[0] - gv(a);
                    let rt = line[ny - 1] - gv(a + ny - 1);
                    o[0] = o[0] + p.tau_x0 * k * rb / (w0 * w0);
                    o[ny - 1] = o[ny - 1] + p.tau_x0 * k * rt / (wn * wn);
                    let c = -p.tau_x1 * k;
                    for &(j, d) in &self.dy_first {
                        o[j] = o[j] - c * d * rb / self.wy[j];
                    }
                    for &(j, d) in &self.dy_last {
                        o[j] = o[j] + c * d * rt / self.wy[j];
                    }
                }
            }
        }
    }

    /// `out = P⊥ u` with homogeneous boundary data.
    pub fn apply_homogeneous(&self, u: &[T], out: &mut [T]) {
        let ny = self.grid().ny();
        let k = self.kappa_perp;
        if k == T::zero() {
            out.iter_mut().for_each(|v| *v = T::zero());
            return;
        }
        apply_x(&self.ops.x.d2, ny, u, out);
        let d2y = &self.ops.y.d2;
        for (src, o) in u.chunks_exact(ny).zip(out.chunks_exact_mut(ny)) {
            for (v, row) in o.iter_mut().zip(&d2y.rows) {
                *v = k * (*v + row.dot(src));
            }
        }
        self.add_sat_x(u, None, out);
        self.add_sat_y(u, None, out);
    }

    /// Constant-in-`u` part of `P⊥`: `SAT(0, g)`.
    pub fn boundary_forcing(&self, g: &[T]) -> Vec<T> {
        let zeros = vec![T::zero(); g.len()];
        let mut out = vec![T::zero(); g.len()];
        self.add_sat_x(&zeros, Some(g), &mut out);
        if self.y_boundary == YBoundary::Dirichlet {
            self.add_sat_y(&zeros, Some(g), &mut out);
        }
        out
    }

    /// Full action `P⊥ u` with boundary data evaluated at `t`.
    pub fn apply_perp(&self, u: &[T], t: T) -> Result<Vec<T>> {
        check_len(self.grid().len(), u.len())?;
        let mut out = vec![T::zero(); u.len()];
        self.apply_homogeneous(u, &mut out);
        if self.data.is_some() {
            let f = self.boundary_forcing(&self.boundary_vector(t));
            for (o, v) in out.iter_mut().zip(f) {
                *o = *o + v;
            }
        }
        Ok(out)
    }

    /// `SAT_x` alone for residual `u - g`.
    pub fn apply_sat_x(&self, u: &[T], g: &[T]) -> Result<Vec<T>> {
        check_len(self.grid().len(), u.len())?;
        check_len(self.grid().len(), g.len())?;
        let mut out = vec![T::zero(); u.len()];
        self.add_sat_x(u, Some(g), &mut out);
        Ok(out)
    }

    /// `SAT_y` alone (homogeneous data in the Dirichlet case).
    pub fn apply_sat_y(&self, u: &[T]) -> Result<Vec<T>> {
        check_len(self.grid().len(), u.len())?;
        let mut out = vec![T::zero(); u.len()];
        self.add_sat_y(u, None, &mut out);
        Ok(out)
    }

    /// Dense `A⊥ = -H P⊥` (homogeneous data).
    pub fn assemble_a(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.grid().len();
        if n > cap {
            return Err(Error::DenseCapExceeded { size: n, cap });
        }
        let h = self.h_diag().to_vec();
        Ok(dense::assemble::<T>(n, |e, col| {
            self.apply_homogeneous(e, col);
            for (c, &w) in col.iter_mut().zip(&h) {
                *c = -*c * w;
            }
        }))
    }

    pub fn audit_definiteness(&self, tol: f64, cap: usize) -> Result<DefinitenessReport> {
        let a = self.assemble_a(cap)?;
        let asymmetry = dense::asymmetry(&a);
        let min_eigenvalue = dense::min_eigenvalue(&a);
        Ok(DefinitenessReport {
            size: a.nrows(),
            asymmetry,
            min_eigenvalue,
            passed: asymmetry <= tol && min_eigenvalue >= -tol,
        })
    }
}

fn row_entries<T: Real>(r: &SparseRow<T>) -> Vec<(usize, T)> {
    r.coeffs.iter().enumerate().filter(|(_, &c)| c != T::zero()).map(|(k, &c)| (r.start + k, c)).collect()
}

#[derive(Clone, Debug)]
pub struct DefinitenessReport {
    pub size: usize,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}
