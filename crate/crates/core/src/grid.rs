//! Uniform 1D/2D grids, the flattened vector layout and discrete norms.
//!
//! Indices are zero-based. A 2D grid vector stores node `(i, j)` at
//! `i * ny + j`: y runs fastest, so `A ⊗ B` acts with `A` across x-blocks
//! and `B` within each block.

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D<T> {
    pub x_left: T,
    pub x_right: T,
    pub n: usize,
    pub dx: T,
}

impl<T: Real> Grid1D<T> {
    pub fn new(x_left: T, x_right: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need n >= 2, got {n}")));
        }
        if !(x_left < x_right) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "degenerate interval [{x_left}, {x_right}]"
            )));
        }
        let dx = (x_right - x_left) / T::from_count(n - 1);
        Ok(Grid1D { x_left, x_right, n, dx })
    }

    pub fn length(&self) -> T {
        self.x_right - self.x_left
    }

    /// Coordinate of point `j`; the last point is `x_right` exactly.
    #[inline]
    pub fn point(&self, j: usize) -> T {
        if j + 1 == self.n {
            self.x_right
        } else {
            self.x_left + T::from_count(j) * self.dx
        }
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n).map(|j| self.point(j)).collect()
    }
}

pub fn make_grid_1d<T: Real>(x_left: T, x_right: T, n: usize) -> Result<Grid1D<T>> {
    Grid1D::new(x_left, x_right, n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D<T> {
    pub gx: Grid1D<T>,
    pub gy: Grid1D<T>,
}

impl<T: Real> Grid2D<T> {
    pub fn new(gx: Grid1D<T>, gy: Grid1D<T>) -> Self {
        Grid2D { gx, gy }
    }

    /// `[x0, x1] x [y0, y1]` with `nx` by `ny` points.
    pub fn rectangle(x0: T, x1: T, y0: T, y1: T, nx: usize, ny: usize) -> Result<Self> {
        Ok(Grid2D { gx: Grid1D::new(x0, x1, nx)?, gy: Grid1D::new(y0, y1, ny)? })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.gx.n
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.gy.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.gx.n * self.gy.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unchecked flat index, for hot loops.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.gy.n + j
    }

    pub fn flat_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.nx() || j >= self.ny() {
            return Err(Error::IndexOutOfRange { i, j, nx: self.nx(), ny: self.ny() });
        }
        Ok(self.idx(i, j))
    }

    pub fn unflatten(&self, k: usize) -> Result<(usize, usize)> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange { i: k / self.ny(), j: k % self.ny(), nx: self.nx(), ny: self.ny() });
        }
        Ok((k / self.ny(), k % self.ny()))
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (T, T) {
        (self.gx.point(k / self.gy.n), self.gy.point(k % self.gy.n))
    }

    /// Samples `f(x, y)` in flattened order.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        let xs = self.gx.points();
        let ys = self.gy.points();
        let mut u = Vec::with_capacity(self.len());
        for &x in &xs {
            for &y in &ys {
                u.push(f(x, y));
            }
        }
        u
    }
}

/// Dimensionless diagonal quadrature weights; the physical weight of point
/// `j` is `dx * h[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormWeights<T> {
    pub h: Vec<T>,
    pub dx: T,
}

impl<T: Real> NormWeights<T> {
    pub fn new(h: Vec<T>, dx: T) -> Result<Self> {
        if let Some(j) = h.iter().position(|&w| !(w > T::zero())) {
            return Err(Error::InvalidParameter(format!("norm weight {j} is not positive")));
        }
        Ok(NormWeights { h, dx })
    }

    /// Composite trapezoid weights `(1/2, 1, ..., 1, 1/2)`.
    pub fn trapezoid(n: usize, dx: T) -> Self {
        let mut h = vec![T::one(); n];
        h[0] = T::lit(0.5);
        h[n - 1] = T::lit(0.5);
        NormWeights { h, dx }
    }

    #[inline]
    pub fn weight(&self, j: usize) -> T {
        self.dx * self.h[j]
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn min(&self) -> T {
        self.h.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.h.iter().copied().fold(T::zero(), T::max)
    }
}

/// Diagonal of `H = H_x ⊗ H_y` in flattened order.
pub fn h_diagonal<T: Real>(wx: &NormWeights<T>, wy: &NormWeights<T>) -> Vec<T> {
    let mut d = Vec::with_capacity(wx.len() * wy.len());
    for i in 0..wx.len() {
        let a = wx.weight(i);
        for j in 0..wy.len() {
            d.push(a * wy.weight(j));
        }
    }
    d
}

pub fn h_norm<T: Real>(
    u: &[T],
    grid: &Grid2D<T>,
    wx: &NormWeights<T>,
    wy: &NormWeights<T>,
) -> Result<T> {
    check_len(grid.len(), u.len())?;
    check_len(grid.nx(), wx.len())?;
    check_len(grid.ny(), wy.len())?;
    let ny = grid.ny();
    let mut s = T::zero();
    for i in 0..grid.nx() {
        let row: T = (0..ny).map(|j| u[i * ny + j] * u[i * ny + j] * wy.h[j]).sum();
        s = s + row * wx.h[i];
    }
    Ok((s * wx.dx * wy.dx).sqrt())
}

pub fn l2_norm<T: Real>(u: &[T], grid: &Grid2D<T>) -> Result<T> {
    check_len(grid.len(), u.len())?;
    let s: T = u.iter().map(|&v| v * v).sum();
    Ok((s * grid.gx.dx * grid.gy.dx).sqrt())
}

/// `sqrt(sum_k w_k u_k^2)` for a precomputed weight diagonal.
pub fn weighted_norm<T: Real>(u: &[T], w: &[T]) -> T {
    u.iter().zip(w).map(|(&a, &b)| a * a * b).sum::<T>().sqrt()
}
