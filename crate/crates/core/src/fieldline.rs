//! Magnetic fields, field-line tracing and Poincaré sections.
//!
//! Field lines solve `dx/dφ = B(x, φ)` with `φ` time-like. Tracing uses an
//! embedded Dormand–Prince 5(4) pair with PI step-size control.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub trait MagneticField<T>: Send + Sync {
    /// In-plane tangent `(dx/dφ, dy/dφ)` at `(x, y, φ)`.
    fn evaluate(&self, x: T, y: T, phi: T) -> (T, T);

    /// `φ`-length of one transit, or `None` for in-plane fields.
    fn period(&self) -> Option<T> {
        None
    }
}

impl<T, F> MagneticField<T> for F
where
    F: Fn(T, T, T) -> (T, T) + Send + Sync,
{
    fn evaluate(&self, x: T, y: T, phi: T) -> (T, T) {
        self(x, y, phi)
    }
}

/// `B = ẑ × ∇ψ` with `ψ = cos(πx) cos(πy)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NimrodField;

pub fn nimrod_field() -> NimrodField {
    NimrodField
}

impl NimrodField {
    pub fn psi<T: Real>(x: T, y: T) -> T {
        let pi = T::PI();
        (pi * x).cos() * (pi * y).cos()
    }
}

impl<T: Real> MagneticField<T> for NimrodField {
    fn evaluate(&self, x: T, y: T, _phi: T) -> (T, T) {
        let pi = T::PI();
        let (sx, cx) = (pi * x).sin_cos();
        let (sy, cy) = (pi * y).sin_cos();
        (pi * cx * sy, -pi * sx * cy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlabMode<T> {
    pub m: T,
    pub n: T,
    pub eps: T,
}

/// Perturbed slab in `(ψ, θ)` with Hamiltonian
/// `χ = ψ²/2 + Σ ε ψ(ψ-1) cos(mθ - nζ)`, flow `θ' = ∂χ/∂ψ`, `ψ' = -∂χ/∂θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabField<T> {
    pub modes: Vec<SlabMode<T>>,
}

pub fn slab_field<T: Real>(modes: &[(T, T, T)]) -> SlabField<T> {
    SlabField { modes: modes.iter().map(|&(m, n, eps)| SlabMode { m, n, eps }).collect() }
}

impl<T: Real> SlabField<T> {
    /// Islands at ψ = 1/2 and ψ = 2/3.
    pub fn default_modes() -> Self {
        slab_field(&[
            (T::lit(2.0), T::one(), T::lit(1.05e-3)),
            (T::lit(3.0), T::lit(2.0), T::lit(0.7e-3)),
        ])
    }

    pub fn unperturbed() -> Self {
        SlabField { modes: Vec::new() }
    }
}

impl<T: Real> MagneticField<T> for SlabField<T> {
    fn evaluate(&self, psi: T, theta: T, zeta: T) -> (T, T) {
        let mut dpsi = T::zero();
        let mut dtheta = psi;
        let two = T::lit(2.0);
        for md in &self.modes {
            let (s, c) = (md.m * theta - md.n * zeta).sin_cos();
            dtheta = dtheta + md.eps * (two * psi - T::one()) * c;
            dpsi = dpsi + md.eps * psi * (psi - T::one()) * md.m * s;
        }
        (dpsi, dtheta)
    }

    fn period(&self) -> Option<T> {
        Some(T::TAU())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl<T: Real> MagneticField<T> for ZeroField {
    fn evaluate(&self, _: T, _: T, _: T) -> (T, T) {
        (T::zero(), T::zero())
    }
}

/// Constant field.
#[derive(Clone, Copy, Debug)]
pub struct UniformField<T> {
    pub bx: T,
    pub by: T,
}

impl<T: Real> MagneticField<T> for UniformField<T> {
    fn evaluate(&self, _: T, _: T, _: T) -> (T, T) {
        (self.bx, self.by)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
}

impl<T: Real> Default for Tolerance<T> {
    fn default() -> Self {
        Tolerance { abs: T::lit(1e-6), rel: T::lit(1e-6) }
    }
}

impl<T: Real> Tolerance<T> {
    pub fn both(tol: T) -> Self {
        Tolerance { abs: tol, rel: tol }
    }
}

/// Rectangle the traces live in; `y` may be periodic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceDomain<T> {
    pub x: (T, T),
    pub y: (T, T),
    pub y_periodic: bool,
}

impl<T: Real> TraceDomain<T> {
    /// Landing points within this distance of an x-wall (relative to the
    /// domain width) are put back on it; farther out is a failure.
    pub fn snap(&self) -> T {
        T::lit(1e-9) * (self.x.1 - self.x.0)
    }

    pub fn wrap_y(&self, y: T) -> T {
        if !self.y_periodic {
            return y;
        }
        let (y0, y1) = self.y;
        let l = y1 - y0;
        let mut r = (y - y0) % l;
        if r < T::zero() {
            r = r + l;
        }
        // `%` can return l itself after the correction above
        if r >= l {
            r = r - l;
        }
        y0 + r
    }

    /// Wraps and validates a landing point.
    pub fn land(&self, x: T, y: T) -> Option<(T, T)> {
        let s = self.snap();
        if !(x >= self.x.0 - s && x <= self.x.1 + s) || !y.is_finite() {
            return None;
        }
        let x = x.max(self.x.0).min(self.x.1);
        let sy = T::lit(1e-9) * (self.y.1 - self.y.0);
        let inside = y >= self.y.0 - sy && y <= self.y.1 + sy;
        let y = if inside {
            // points on the periodic seam stay on the row they started nearest
            y.max(self.y.0).min(self.y.1)
        } else if self.y_periodic {
            self.wrap_y(y)
        } else {
            return None;
        };
        Some((x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceStatus {
    Converged,
    LeftDomain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceResult<T> {
    pub x_plus: (T, T),
    pub x_minus: (T, T),
    pub status: TraceStatus,
    pub steps: usize,
}

const MAX_STEPS: usize = 1_000_000;

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `phi0` to `phi1` (either direction). Returns the end
/// point and the number of accepted steps.
pub fn integrate<T: Real, F: MagneticField<T> + ?Sized>(
    field: &F,
    start: (T, T),
    phi0: T,
    phi1: T,
    tol: Tolerance<T>,
) -> Result<((T, T), usize)> {
    let fail = |reason: String| Error::TraceFailed {
        node: usize::MAX,
        x: start.0.to_f64_lossy(),
        y: start.1.to_f64_lossy(),
        reason,
    };
    let span = phi1 - phi0;
    if span == T::zero() {
        return Ok((start, 0));
    }
    let dir = span.signum();
    let f = |phi: T, y: [T; 2]| -> [T; 2] {
        let (a, b) = field.evaluate(y[0], y[1], phi);
        [a, b]
    };
    let sc = |y: [T; 2], z: [T; 2], i: usize| tol.abs + tol.rel * y[i].abs().max(z[i].abs());

    let mut phi = phi0;
    let mut y = [start.0, start.1];
    let mut k0 = f(phi, y);

    // Initial step (Hairer's heuristic).
    let d0 = ((y[0] / sc(y, y, 0)).powi(2) + (y[1] / sc(y, y, 1)).powi(2)).sqrt() / T::lit(2f64.sqrt());
    let d1 = ((k0[0] / sc(y, y, 0)).powi(2) + (k0[1] / sc(y, y, 1)).powi(2)).sqrt() / T::lit(2f64.sqrt());
    let mut h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
    h = h.min(span.abs());

    let beta = T::lit(0.04);
    let alpha = T::lit(0.2) - beta * T::lit(0.75);
    let safety = T::lit(0.9);
    let mut err_old = T::lit(1e-4);
    let mut steps = 0usize;
    let mut rejected_last = false;
    let h_min = span.abs() * T::lit(1e-14);

    while (phi1 - phi) * dir > T::zero() {
        if steps >= MAX_STEPS {
            return Err(fail(format!("step limit {MAX_STEPS} reached at phi = {phi}")));
        }
        let last = h >= (phi1 - phi).abs();
        if last {
            h = (phi1 - phi).abs();
        }
        let hs = h * dir;
        let mut k = [[T::zero(); 2]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for (r, kr) in k.iter().enumerate().take(s) {
                let a = T::lit(A[s][r]);
                if a != T::zero() {
                    ys[0] = ys[0] + hs * a * kr[0];
                    ys[1] = ys[1] + hs * a * kr[1];
                }
            }
            if s == 6 {
                // Stage 7 is evaluated at the 5th-order solution (FSAL).
                k[6] = f(phi + hs, ys);
                let mut err = T::zero();
                for i in 0..2 {
                    let e = hs * (0..7).map(|r| T::lit(E[r]) * k[r][i]).sum::<T>();
                    err = err + (e / sc(y, ys, i)).powi(2);
                }
                let err = (err / T::lit(2.0)).sqrt();
                if !err.is_finite() || !ys[0].is_finite() || !ys[1].is_finite() {
                    return Err(fail(format!("non-finite state at phi = {phi}")));
                }
                if err <= T::one() {
                    let e = err.max(T::lit(1e-10));
                    let mut fac = safety * e.powf(-alpha) * err_old.powf(beta);
                    fac = fac.max(T::lit(0.2)).min(T::lit(10.0));
                    if rejected_last {
                        fac = fac.min(T::one());
                    }
                    phi = if last { phi1 } else { phi + hs };
                    y = ys;
                    k0 = k[6];
                    err_old = e;
                    steps += 1;
                    rejected_last = false;
                    h = h * fac;
                } else {
                    let fac = (safety * err.powf(-alpha)).max(T::lit(0.2));
                    h = h * fac;
                    rejected_last = true;
                    if h < h_min {
                        return Err(fail(format!("step size underflow at phi = {phi}")));
                    }
                }
            } else {
                k[s] = f(phi + T::lit(C[s]) * hs, ys);
            }
        }
    }
    Ok(((y[0], y[1]), steps))
}

/// Traces forward to `+span` and backward to `-span` from `start`.
pub fn trace<T: Real, F: MagneticField<T> + ?Sized>(
    field: &F,
    start: (T, T),
    span: T,
    tol: Tolerance<T>,
    domain: &TraceDomain<T>,
) -> Result<TraceResult<T>> {
    if !(span > T::zero()) {
        return Err(Error::InvalidParameter(format!("trace span must be positive, got {span}")));
    }
    if !(tol.abs > T::zero() && tol.rel > T::zero()) {
        return Err(Error::InvalidParameter("trace tolerances must be positive".into()));
    }
    let (fwd, s1) = integrate(field, start, T::zero(), span, tol)?;
    let (bwd, s2) = integrate(field, start, T::zero(), -span, tol)?;
    let (xp, xm) = (domain.land(fwd.0, fwd.1), domain.land(bwd.0, bwd.1));
    let status = if xp.is_some() && xm.is_some() { TraceStatus::Converged } else { TraceStatus::LeftDomain };
    Ok(TraceResult { x_plus: xp.unwrap_or(fwd), x_minus: xm.unwrap_or(bwd), status, steps: s1 + s2 })
}

/// Section points `(x, y)` after each full period, per seed.
pub fn poincare_section<T: Real, F: MagneticField<T> + ?Sized>(
    field: &F,
    seeds: &[(T, T)],
    transits: usize,
    tol: Tolerance<T>,
    domain: &TraceDomain<T>,
) -> Result<Vec<Vec<(T, T)>>> {
    let period = field
        .period()
        .ok_or_else(|| Error::InvalidParameter("Poincaré section needs a field with a transit period".into()))?;
    if transits == 0 {
        return Err(Error::InvalidParameter("transits must be >= 1".into()));
    }
    seeds
        .iter()
        .enumerate()
        .map(|(id, &seed)| {
            let mut p = seed;
            let mut out = Vec::with_capacity(transits);
            for _ in 0..transits {
                let (q, _) = integrate(field, p, T::zero(), period, tol).map_err(|e| match e {
                    Error::TraceFailed { reason, .. } => Error::TraceFailed {
                        node: id,
                        x: seed.0.to_f64_lossy(),
                        y: seed.1.to_f64_lossy(),
                        reason,
                    },
                    other => other,
                })?;
                p = domain.land(q.0, q.1).ok_or_else(|| Error::TraceFailed {
                    node: id,
                    x: seed.0.to_f64_lossy(),
                    y: seed.1.to_f64_lossy(),
                    reason: "left the domain".into(),
                })?;
                out.push(p);
            }
            Ok(out)
        })
        .collect()
}
