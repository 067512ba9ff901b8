//! Diagonal-norm SBP operators of order 2 and 4.
//!
//! The second derivative is built in fully compatible form,
//! `H D2 = -M + B K D1` with `M = D1ᵀ K H D1 + R` and `R` positive
//! semi-definite, so the boundary derivative is the first-derivative
//! boundary row itself. `R` is assembled from weighted undivided
//! differences, which keeps it semi-definite for any positive `κ`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::grid::NormWeights;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    Second,
    Fourth,
}

impl Order {
    pub fn from_usize(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Order::Second),
            4 => Ok(Order::Fourth),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Order::Second => 2,
            Order::Fourth => 4,
        }
    }

    pub fn min_points(self) -> usize {
        match self {
            Order::Second => 4,
            Order::Fourth => 12,
        }
    }

    /// Number of rows at each end with non-interior stencils.
    pub fn boundary_rows(self) -> usize {
        match self {
            Order::Second => 1,
            Order::Fourth => 4,
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_usize())
    }
}

/// Contiguous run of coefficients starting at column `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow<T> {
    pub start: usize,
    pub coeffs: Vec<T>,
}

impl<T: Real> SparseRow<T> {
    #[inline]
    pub fn dot(&self, u: &[T]) -> T {
        self.coeffs
            .iter()
            .zip(&u[self.start..self.start + self.coeffs.len()])
            .fold(T::zero(), |s, (&c, &v)| s + c * v)
    }

    pub fn get(&self, j: usize) -> T {
        if j >= self.start && j < self.start + self.coeffs.len() {
            self.coeffs[j - self.start]
        } else {
            T::zero()
        }
    }
}

/// Square matrix stored as one [`SparseRow`] per row.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedOp<T> {
    pub rows: Vec<SparseRow<T>>,
}

impl<T: Real> BandedOp<T> {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.rows[i].get(j)
    }

    /// `out = A u` for a contiguous vector.
    pub fn apply(&self, u: &[T], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.dot(u);
        }
    }

    /// `out = Aᵀ u`.
    pub fn apply_transpose(&self, u: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (row, &ui) in self.rows.iter().zip(u) {
            if ui == T::zero() {
                continue;
            }
            for (k, &c) in row.coeffs.iter().enumerate() {
                out[row.start + k] = out[row.start + k] + c * ui;
            }
        }
    }

    /// Column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> Vec<(usize, T)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let v = r.get(j);
                (v != T::zero()).then_some((i, v))
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            for (k, &c) in r.coeffs.iter().enumerate() {
                a[(i, r.start + k)] = c.to_f64_lossy();
            }
        }
        a
    }

    fn from_dense_rows(dense: &[Vec<T>]) -> Self {
        let rows = dense
            .iter()
            .map(|row| {
                let first = row.iter().position(|&c| c != T::zero());
                let last = row.iter().rposition(|&c| c != T::zero());
                match (first, last) {
                    (Some(a), Some(b)) => SparseRow { start: a, coeffs: row[a..=b].to_vec() },
                    _ => SparseRow { start: 0, coeffs: Vec::new() },
                }
            })
            .collect();
        BandedOp { rows }
    }
}

/// 1D operator set on `n` points with spacing `dx`.
#[derive(Clone, Debug)]
pub struct SbpOperatorSet<T> {
    pub order: Order,
    pub n: usize,
    pub dx: T,
    pub h: NormWeights<T>,
    pub d1: BandedOp<T>,
    /// Variable-coefficient second derivative `D2^(κ)`.
    pub d2: BandedOp<T>,
    /// `M^(κ)`, including the `1/dx` scaling.
    pub m: BandedOp<T>,
    pub kappa: Vec<T>,
}

impl<T: Real> SbpOperatorSet<T> {
    /// Left and right boundary derivative stencils (the `B K D1` part).
    pub fn boundary_derivative(&self) -> (&SparseRow<T>, &SparseRow<T>) {
        (&self.d1.rows[0], &self.d1.rows[self.n - 1])
    }

    pub fn apply_d1(&self, u: &[T], out: &mut [T]) {
        self.d1.apply(u, out)
    }

    pub fn apply_d2(&self, u: &[T], out: &mut [T]) {
        self.d2.apply(u, out)
    }

    pub fn norm_diagonal(&self) -> Vec<T> {
        (0..self.n).map(|j| self.h.weight(j)).collect()
    }
}

fn d1_boundary<T: Real>(order: Order) -> Vec<Vec<T>> {
    let r = |v: &[f64]| v.iter().map(|&c| T::lit(c)).collect::<Vec<_>>();
    match order {
        Order::Second => vec![r(&[-1.0, 1.0])],
        Order::Fourth => vec![
            r(&[-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0]),
            r(&[-0.5, 0.0, 0.5]),
            r(&[4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0]),
            r(&[3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0]),
        ],
    }
}

fn d1_interior<T: Real>(order: Order) -> Vec<T> {
    match order {
        Order::Second => vec![T::lit(-0.5), T::zero(), T::lit(0.5)],
        Order::Fourth => [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0]
            .iter()
            .map(|&c| T::lit(c))
            .collect(),
    }
}

fn norm_boundary(order: Order) -> &'static [f64] {
    match order {
        Order::Second => &[0.5],
        Order::Fourth => &[17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0],
    }
}

/// Dimensionless norm weights for `order` on `n` points.
pub fn norm_weights<T: Real>(order: Order, n: usize, dx: T) -> NormWeights<T> {
    let b = norm_boundary(order);
    let mut h = vec![T::one(); n];
    for (k, &w) in b.iter().enumerate() {
        h[k] = T::lit(w);
        h[n - 1 - k] = T::lit(w);
    }
    NormWeights { h, dx }
}

/// Undivided `D1` (scaled by `dx`) as dense rows.
fn d1_undivided<T: Real>(order: Order, n: usize) -> Vec<Vec<T>> {
    let bnd = d1_boundary::<T>(order);
    let int = d1_interior::<T>(order);
    let half = int.len() / 2;
    let mut d = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        if i < bnd.len() {
            for (k, &c) in bnd[i].iter().enumerate() {
                d[i][k] = c;
            }
        } else if i >= n - bnd.len() {
            let r = n - 1 - i;
            for (k, &c) in bnd[r].iter().enumerate() {
                d[i][n - 1 - k] = -c;
            }
        } else {
            for (k, &c) in int.iter().enumerate() {
                d[i][i + k - half] = c;
            }
        }
    }
    d
}

/// Accumulates `w * a ⊗ a` for a sparse row `a` into the dense symmetric `m`.
fn add_outer<T: Real>(m: &mut [Vec<T>], start: usize, a: &[T], w: T) {
    for (p, &ap) in a.iter().enumerate() {
        if ap == T::zero() {
            continue;
        }
        for (q, &aq) in a.iter().enumerate() {
            m[start + p][start + q] = m[start + p][start + q] + w * (ap * aq);
        }
    }
}

// Left 3x3 boundary block of the third-difference weight matrix used for
// order 4; with κ ≡ 1 it reproduces the classical constant-coefficient M.
const G3_BLOCK: [[f64; 3]; 3] = [
    [248027.0 / 2578968.0, 3625.0 / 303408.0, -1.0 / 392.0],
    [3625.0 / 303408.0, 8843.0 / 151704.0, -5.0 / 7056.0],
    [-1.0 / 392.0, -5.0 / 7056.0, 131.0 / 2352.0],
];

/// Undivided `M̂` with `M = M̂ / dx`.
fn m_undivided<T: Real>(order: Order, d1: &[Vec<T>], h: &[T], kappa: &[T]) -> Vec<Vec<T>> {
    let n = h.len();
    let mut m = vec![vec![T::zero(); n]; n];
    for k in 0..n {
        let row = &d1[k];
        let first = row.iter().position(|&c| c != T::zero()).unwrap_or(0);
        let last = row.iter().rposition(|&c| c != T::zero()).unwrap_or(0);
        add_outer(&mut m, first, &row[first..=last], h[k] * kappa[k]);
    }
    let half = T::lit(0.5);
    match order {
        Order::Second => {
            let t2 = [T::one(), T::lit(-2.0), T::one()];
            for k in 0..n - 2 {
                add_outer(&mut m, k, &t2, T::lit(0.25) * kappa[k + 1]);
            }
        }
        Order::Fourth => {
            let t3 = [-T::one(), T::lit(3.0), T::lit(-3.0), T::one()];
            let t4 = [T::one(), T::lit(-4.0), T::lit(6.0), T::lit(-4.0), T::one()];
            for k in 0..n - 4 {
                add_outer(&mut m, k, &t4, kappa[k + 2] / T::lit(144.0));
            }
            // T3ᵀ S G3 S T3 with S = diag(sqrt(β)), β_k the mean κ over the
            // two central points of the k-th third difference.
            let mt = n - 3;
            let s: Vec<T> = (0..mt).map(|k| ((kappa[k + 1] + kappa[k + 2]) * half).sqrt()).collect();
            let g = |a: usize, b: usize| -> T {
                if a < 3 && b < 3 {
                    T::lit(G3_BLOCK[a][b])
                } else if a >= mt - 3 && b >= mt - 3 {
                    T::lit(G3_BLOCK[mt - 1 - a][mt - 1 - b])
                } else if a == b {
                    T::lit(1.0 / 18.0)
                } else {
                    T::zero()
                }
            };
            for a in 0..mt {
                let lo = a.saturating_sub(2);
                let hi = (a + 2).min(mt - 1);
                for b in lo..=hi {
                    let w = g(a, b);
                    if w == T::zero() {
                        continue;
                    }
                    let w = w * (s[a] * s[b]);
                    for p in 0..4 {
                        for q in 0..4 {
                            let c = w * (t3[p] * t3[q]);
                            m[a + p][b + q] = m[a + p][b + q] + c;
                        }
                    }
                }
            }
        }
    }
    // Symmetrize exactly; pairwise sums above are not bitwise symmetric.
    for i in 0..n {
        for j in 0..i {
            let v = (m[i][j] + m[j][i]) * half;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Builds the operator set for `order` on `n` points with spacing `dx` and
/// per-point diffusivity `kappa` (strictly positive).
pub fn build_sbp<T: Real>(order: Order, n: usize, dx: T, kappa: &[T]) -> Result<SbpOperatorSet<T>> {
    if n < order.min_points() {
        return Err(Error::TooFewPoints { order: order.as_usize(), n, min: order.min_points() });
    }
    check_len(n, kappa.len())?;
    if !(dx > T::zero()) || !dx.is_finite() {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {dx}")));
    }
    if let Some(index) = kappa.iter().position(|&k| !(k > T::zero()) || !k.is_finite()) {
        return Err(Error::NonPositiveKappa { index, value: kappa[index].to_f64_lossy() });
    }
    let hw = norm_weights(order, n, dx);
    let d1h = d1_undivided::<T>(order, n);
    let mh = m_undivided(order, &d1h, &hw.h, kappa);

    let inv_dx = T::one() / dx;
    let d1: Vec<Vec<T>> = d1h.iter().map(|r| r.iter().map(|&c| c * inv_dx).collect()).collect();
    let m: Vec<Vec<T>> = mh.iter().map(|r| r.iter().map(|&c| c * inv_dx).collect()).collect();

    // D2 = H^{-1} (-M + B K D1)
    let mut d2: Vec<Vec<T>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = -T::one() / hw.weight(i);
            r.iter().map(|&c| c * s).collect()
        })
        .collect();
    for (i, sign) in [(0usize, -T::one()), (n - 1, T::one())] {
        let s = sign * kappa[i] / hw.weight(i);
        for j in 0..n {
            d2[i][j] = d2[i][j] + s * d1[i][j];
        }
    }

    Ok(SbpOperatorSet {
        order,
        n,
        dx,
        h: hw,
        d1: BandedOp::from_dense_rows(&d1),
        d2: BandedOp::from_dense_rows(&d2),
        m: BandedOp::from_dense_rows(&m),
        kappa: kappa.to_vec(),
    })
}

/// Constant-coefficient convenience wrapper.
pub fn build_sbp_const<T: Real>(order: Order, n: usize, dx: T, kappa: T) -> Result<SbpOperatorSet<T>> {
    build_sbp(order, n, dx, &vec![kappa; n])
}

/// Outcome of [`verify_sbp_identities`]. All quantities are absolute.
#[derive(Clone, Debug)]
pub struct SbpReport {
    /// max |Q + Qᵀ - B| with Q = H D1.
    pub q_defect: f64,
    pub q_defect_at: (usize, usize),
    /// max |H D2 + M - B K D1|.
    pub decomposition_defect: f64,
    pub m_asymmetry: f64,
    pub m_min_eig: f64,
    pub r_asymmetry: f64,
    pub r_min_eig: f64,
    pub tol: f64,
    pub passed: bool,
}

fn max_asym(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Dense check of the SBP identities, full compatibility and semi-definiteness.
pub fn verify_sbp_identities<T: Real>(ops: &SbpOperatorSet<T>, tol: f64) -> SbpReport {
    let n = ops.n;
    let h = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|j| ops.h.weight(j).to_f64_lossy()),
    ));
    let kap = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        ops.kappa.iter().map(|k| k.to_f64_lossy()),
    ));
    let mut b = DMatrix::zeros(n, n);
    b[(0, 0)] = -1.0;
    b[(n - 1, n - 1)] = 1.0;
    let d1 = ops.d1.to_dense();
    let d2 = ops.d2.to_dense();
    let m = ops.m.to_dense();

    let q = &h * &d1;
    let qd = (&q + q.transpose() - &b).abs();
    let (mut q_defect, mut q_defect_at) = (0.0, (0, 0));
    for i in 0..n {
        for j in 0..n {
            if qd[(i, j)] > q_defect {
                q_defect = qd[(i, j)];
                q_defect_at = (i, j);
            }
        }
    }
    let decomposition_defect = (&h * &d2 + &m - &b * &kap * &d1).abs().max();
    let r = &m - d1.transpose() * &kap * &h * &d1;
    let m_asymmetry = max_asym(&m);
    let r_asymmetry = max_asym(&r);
    let m_min_eig = min_eig(&m);
    let r_min_eig = min_eig(&r);
    let passed = q_defect <= tol
        && decomposition_defect <= tol * (1.0 + m.abs().max())
        && m_asymmetry <= tol
        && r_asymmetry <= tol
        && m_min_eig >= -tol
        && r_min_eig >= -tol;
    SbpReport {
        q_defect,
        q_defect_at,
        decomposition_defect,
        m_asymmetry,
        m_min_eig,
        r_asymmetry,
        r_min_eig,
        tol,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
        let dx = 1.0 / (n - 1) as f64;
        ((0..n).map(|j| f(j as f64 * dx)).collect(), dx)
    }

    #[test]
    fn d1_exact_on_linear_order2() {
        let (u, dx) = sample(9, |x| x);
        let ops = build_sbp_const(Order::Second, 9, dx, 1.0).unwrap();
        let mut out = vec![0.0; 9];
        ops.apply_d1(&u, &mut out);
        for v in out {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn d2_on_quadratic_order2() {
        let n = 11;
        let (u, dx) = sample(n, |x| x * x);
        let ops = build_sbp_const(Order::Second, n, dx, 1.0).unwrap();
        let mut out = vec![0.0; n];
        ops.apply_d2(&u, &mut out);
        for v in &out[1..n - 1] {
            assert!((v - 2.0).abs() < 1e-11, "{v}");
        }
        // The end rows inherit the one-sided boundary derivative; what holds
        // there is discrete integration by parts: 1ᵀ H D2 u = (D1 u)_n - (D1 u)_1.
        let mut du = vec![0.0; n];
        ops.apply_d1(&u, &mut du);
        let flux: f64 = (0..n).map(|j| ops.h.weight(j) * out[j]).sum();
        assert!((flux - (du[n - 1] - du[0])).abs() < 1e-11);
    }

    #[test]
    fn q_plus_qt_has_two_entries() {
        let ops = build_sbp_const(Order::Second, 5, 0.25, 1.0).unwrap();
        let n = 5;
        for i in 0..n {
            for j in 0..n {
                let q = |a: usize, b: usize| ops.h.weight(a) * ops.d1.entry(a, b);
                let s: f64 = q(i, j) + q(j, i);
                let want = if i == 0 && j == 0 {
                    -1.0
                } else if i == n - 1 && j == n - 1 {
                    1.0
                } else {
                    0.0
                };
                assert!((s - want).abs() < 1e-15, "({i},{j}) {s}");
            }
        }
    }

    #[test]
    fn fourth_order_matches_classical_rows() {
        // Rows 1..3 of the constant-coefficient D2 do not see the boundary
        // derivative and must equal the classical closure.
        let n = 16;
        let ops = build_sbp_const(Order::Fourth, n, 1.0, 1.0).unwrap();
        let want: [&[f64]; 3] = [
            &[1.0, -2.0, 1.0],
            &[-4.0 / 43.0, 59.0 / 43.0, -110.0 / 43.0, 59.0 / 43.0, -4.0 / 43.0],
            &[-1.0 / 49.0, 0.0, 59.0 / 49.0, -118.0 / 49.0, 64.0 / 49.0, -4.0 / 49.0],
        ];
        for (r, w) in want.iter().enumerate() {
            for j in 0..n {
                let e = w.get(j).copied().unwrap_or(0.0);
                assert!((ops.d2.entry(r + 1, j) - e).abs() < 1e-13, "row {} col {j}", r + 1);
            }
        }
        let interior = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for (k, &c) in interior.iter().enumerate() {
            assert!((ops.d2.entry(7, 5 + k) - c).abs() < 1e-13);
        }
    }

    #[test]
    fn identities_hold() {
        for order in [Order::Second, Order::Fourth] {
            let n = 16;
            let dx = 1.0 / (n - 1) as f64;
            let kappa: Vec<f64> = (0..n).map(|j| 1.0 + (j as f64 * dx).powi(2)).collect();
            let ops = build_sbp(order, n, dx, &kappa).unwrap();
            let rep = verify_sbp_identities(&ops, 1e-12);
            assert!(rep.passed, "{order}: {rep:?}");
        }
    }

    #[test]
    fn corrupted_q_is_flagged() {
        let mut ops = build_sbp_const(Order::Second, 8, 0.1, 1.0).unwrap();
        ops.d1.rows[0].coeffs[0] = -0.5 / 0.1;
        let rep = verify_sbp_identities(&ops, 1e-12);
        assert!(!rep.passed);
        assert_eq!(rep.q_defect_at, (0, 0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_sbp_const(Order::Fourth, 11, 0.1, 1.0).is_err());
        assert!(build_sbp_const(Order::Second, 3, 0.1, 1.0).is_err());
        assert!(build_sbp_const(Order::Second, 8, 0.1, 0.0).is_err());
        assert!(build_sbp(Order::Second, 8, 0.1, &[1.0; 7]).is_err());
        assert!(Order::from_usize(6).is_err());
    }
}
