//! Matrix-free 2D Kronecker extensions of the 1D operators and the
//! boundary projection operators.

use crate::error::{check_len, Error, Result};
use crate::grid::{h_diagonal, Grid2D};
use crate::sbp::{BandedOp, SbpOperatorSet};
use crate::scalar::Real;

/// `(A ⊗ I) u`: applies `a` across x-blocks of length `ny`.
pub fn apply_x<T: Real>(a: &BandedOp<T>, ny: usize, u: &[T], out: &mut [T]) {
    for (i, row) in a.rows.iter().enumerate() {
        let o = &mut out[i * ny..(i + 1) * ny];
        o.iter_mut().for_each(|v| *v = T::zero());
        for (k, &c) in row.coeffs.iter().enumerate() {
            let src = &u[(row.start + k) * ny..(row.start + k + 1) * ny];
            for (a, &b) in o.iter_mut().zip(src) {
                *a = *a + c * b;
            }
        }
    }
}

/// `(I ⊗ A) u`: applies `a` within each contiguous y-line.
pub fn apply_y<T: Real>(a: &BandedOp<T>, ny: usize, u: &[T], out: &mut [T]) {
    for (src, o) in u.chunks_exact(ny).zip(out.chunks_exact_mut(ny)) {
        a.apply(src, o);
    }
}

/// 2D operator actions on a tensor grid.
#[derive(Clone, Debug)]
pub struct Ops2D<T> {
    pub grid: Grid2D<T>,
    pub x: SbpOperatorSet<T>,
    pub y: SbpOperatorSet<T>,
    h: Vec<T>,
}

pub fn extend_2d<T: Real>(
    ops_x: SbpOperatorSet<T>,
    ops_y: SbpOperatorSet<T>,
    grid: &Grid2D<T>,
) -> Result<Ops2D<T>> {
    if ops_x.n != grid.nx() || ops_y.n != grid.ny() {
        return Err(Error::InvalidGrid(format!(
            "operators are {}x{}, grid is {}x{}",
            ops_x.n,
            ops_y.n,
            grid.nx(),
            grid.ny()
        )));
    }
    let h = h_diagonal(&ops_x.h, &ops_y.h);
    Ok(Ops2D { grid: grid.clone(), x: ops_x, y: ops_y, h })
}

impl<T: Real> Ops2D<T> {
    fn check(&self, u: &[T], out: &[T]) -> Result<()> {
        check_len(self.grid.len(), u.len())?;
        check_len(self.grid.len(), out.len())
    }

    pub fn apply_dx(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check(u, out)?;
        apply_x(&self.x.d1, self.grid.ny(), u, out);
        Ok(())
    }

    pub fn apply_dxx(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check(u, out)?;
        apply_x(&self.x.d2, self.grid.ny(), u, out);
        Ok(())
    }

    pub fn apply_dy(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check(u, out)?;
        apply_y(&self.y.d1, self.grid.ny(), u, out);
        Ok(())
    }

    pub fn apply_dyy(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check(u, out)?;
        apply_y(&self.y.d2, self.grid.ny(), u, out);
        Ok(())
    }

    /// Diagonal of `H = H_x ⊗ H_y`.
    pub fn h_diag(&self) -> &[T] {
        &self.h
    }

    pub fn apply_h(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check(u, out)?;
        for ((o, &v), &w) in out.iter_mut().zip(u).zip(&self.h) {
            *o = v * w;
        }
        Ok(())
    }
}

/// Slice selectors and periodic difference selectors on a 2D grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryProjections {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    B1x,
    Bnx,
    B1y,
    Bny,
    E1y,
    Eny,
}

pub fn build_boundary_projections<T: Real>(grid: &Grid2D<T>) -> BoundaryProjections {
    BoundaryProjections { nx: grid.nx(), ny: grid.ny() }
}

/// `E_1 v = (v_1 - v_n, 0, ..., 0)` on a 1D vector.
pub fn e_first<T: Real>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let mut out = vec![T::zero(); n];
    out[0] = v[0] - v[n - 1];
    out
}

/// `E_n v = (0, ..., 0, v_n - v_1)` on a 1D vector.
pub fn e_last<T: Real>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let mut out = vec![T::zero(); n];
    out[n - 1] = v[n - 1] - v[0];
    out
}

impl BoundaryProjections {
    pub fn apply<T: Real>(&self, p: Projection, v: &[T]) -> Result<Vec<T>> {
        let (nx, ny) = (self.nx, self.ny);
        check_len(nx * ny, v.len())?;
        let mut out = vec![T::zero(); v.len()];
        match p {
            Projection::B1x => out[..ny].copy_from_slice(&v[..ny]),
            Projection::Bnx => out[(nx - 1) * ny..].copy_from_slice(&v[(nx - 1) * ny..]),
            Projection::B1y | Projection::Bny | Projection::E1y | Projection::Eny => {
                for i in 0..nx {
                    let a = i * ny;
                    let b = a + ny - 1;
                    match p {
                        Projection::B1y => out[a] = v[a],
                        Projection::Bny => out[b] = v[b],
                        Projection::E1y => out[a] = v[a] - v[b],
                        _ => out[b] = v[b] - v[a],
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbp::{build_sbp_const, Order};

    #[test]
    fn periodic_selectors() {
        let v = [3.0, 0.0, 0.0, 5.0];
        assert_eq!(e_first(&v), vec![-2.0, 0.0, 0.0, 0.0]);
        assert_eq!(e_last(&v), vec![0.0, 0.0, 0.0, 2.0]);
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, 1 + 1, 4).unwrap();
        let p = build_boundary_projections(&g);
        let w = [3.0, 0.0, 0.0, 5.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(p.apply(Projection::E1y, &w).unwrap(), vec![-2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.apply(Projection::Eny, &w).unwrap(), vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn x_selectors_disjoint() {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, 4, 3).unwrap();
        let p = build_boundary_projections(&g);
        let v: Vec<f64> = (0..12).map(|k| k as f64 + 1.0).collect();
        let a = p.apply(Projection::B1x, &v).unwrap();
        assert_eq!(&a[..3], &[1.0, 2.0, 3.0]);
        let b = p.apply(Projection::Bnx, &a).unwrap();
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_and_quadratic_exactness() {
        let g = Grid2D::<f64>::rectangle(0.0, 1.0, -1.0, 2.0, 12, 13).unwrap();
        let ox = build_sbp_const(Order::Fourth, 12, g.gx.dx, 1.0).unwrap();
        let oy = build_sbp_const(Order::Fourth, 13, g.gy.dx, 1.0).unwrap();
        let ops = extend_2d(ox, oy, &g).unwrap();
        let mut out = vec![0.0; g.len()];
        ops.apply_dx(&g.sample(|x, _| x), &mut out).unwrap();
        assert!(out.iter().all(|v: &f64| (v - 1.0).abs() < 1e-12));
        ops.apply_dyy(&g.sample(|_, y| y * y), &mut out).unwrap();
        assert!(out.iter().all(|v: &f64| (v - 2.0).abs() < 1e-10));
    }
}
