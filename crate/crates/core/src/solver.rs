//! Split backward-Euler time stepper.
//!
//! Stage 1 solves `(I - dt P⊥) u_half = u + dt F + dt SAT(0, g)` by conjugate
//! gradients in the `H` inner product; stage 2 is the pointwise parallel
//! update.

use std::ops::ControlFlow;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::grid::{weighted_norm, Grid2D};
use crate::parallel::{update_with, ParallelMap, ParallelPenalty};
use crate::perp::PerpOperator;
use crate::scalar::{axpy, Real};

pub type Source<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;
pub type Initial<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgSettings<T> {
    pub rtol: T,
    /// `None` means `10 * n_x * n_y`.
    pub maxit: Option<usize>,
}

impl<T: Real> Default for CgSettings<T> {
    fn default() -> Self {
        CgSettings { rtol: T::lit(1e-10), maxit: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats<T> {
    pub iters: usize,
    /// `‖b - Ax‖_H / ‖x‖_H` at exit.
    pub residual: T,
    pub converged: bool,
}

/// Conjugate gradients for `A x = b` with `A` self-adjoint and positive
/// definite in `<u, v>_H = Σ h_k u_k v_k`.
///
/// Stops when `‖r‖_H ≤ rtol ‖x‖_H`.
pub fn cg_solve_hnorm<T: Real>(
    mut apply_a: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x0: &[T],
    h: &[T],
    rtol: T,
    maxit: usize,
) -> Result<(Vec<T>, CgStats<T>)> {
    let n = b.len();
    check_len(n, x0.len())?;
    check_len(n, h.len())?;
    if !(rtol > T::zero()) {
        return Err(Error::InvalidParameter(format!("rtol must be positive, got {rtol}")));
    }
    let hdot = |a: &[T], c: &[T]| -> T { a.iter().zip(c).zip(h).fold(T::zero(), |s, ((&x, &y), &w)| s + w * x * y) };

    let mut x = x0.to_vec();
    let mut ap = vec![T::zero(); n];
    apply_a(&x, &mut ap);
    let mut r: Vec<T> = b.iter().zip(&ap).map(|(&bi, &ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = hdot(&r, &r);
    let mut iters = 0;
    let rel = |rr: T, x: &[T]| {
        let xn = hdot(x, x).sqrt();
        if xn > T::zero() {
            rr.sqrt() / xn
        } else {
            rr.sqrt()
        }
    };
    loop {
        if !rr.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual"));
        }
        if rr.sqrt() <= rtol * hdot(&x, &x).sqrt() || rr == T::zero() {
            return Ok((x.clone(), CgStats { iters, residual: rel(rr, &x), converged: true }));
        }
        if iters == maxit {
            return Ok((x.clone(), CgStats { iters, residual: rel(rr, &x), converged: false }));
        }
        apply_a(&p, &mut ap);
        let pap = hdot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "operator is not positive definite in the H inner product (pAp = {pap})"
            )));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = hdot(&r, &r);
        let beta = rr_new / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
        iters += 1;
    }
}

/// An anisotropic diffusion problem: perpendicular operator (with its
/// boundary data), optional parallel map, source and initial condition.
#[derive(Clone)]
pub struct Problem<T: Real> {
    pub perp: PerpOperator<T>,
    /// `None` solves the purely perpendicular problem.
    pub map: Option<ParallelMap<T>>,
    pub penalty: ParallelPenalty<T>,
    pub source: Option<Source<T>>,
    pub initial: Option<Initial<T>>,
    pub cg: CgSettings<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(perp: PerpOperator<T>) -> Self {
        let penalty = ParallelPenalty::new(perp.grid(), T::one());
        Problem { perp, map: None, penalty, source: None, initial: None, cg: CgSettings::default() }
    }

    /// Attaches a parallel map with `κ∥ = kappa_par` and the default `τ∥`.
    pub fn parallel(mut self, map: ParallelMap<T>, kappa_par: T) -> Result<Self> {
        if map.grid != *self.perp.grid() {
            return Err(Error::InvalidParameter("parallel map built on a different grid".into()));
        }
        if !(kappa_par >= T::zero()) {
            return Err(Error::InvalidParameter(format!("kappa_par must be nonnegative, got {kappa_par}")));
        }
        self.penalty.kappa_par = kappa_par;
        self.map = Some(map);
        Ok(self)
    }

    pub fn tau_par(mut self, tau: T) -> Self {
        self.penalty.tau_par = tau;
        self
    }

    pub fn source(mut self, f: impl Fn(T, T, T) -> T + Send + Sync + 'static) -> Self {
        self.source = Some(Arc::new(f));
        self
    }

    pub fn initial(mut self, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.initial = Some(Arc::new(f));
        self
    }

    pub fn cg(mut self, cg: CgSettings<T>) -> Self {
        self.cg = cg;
        self
    }

    pub fn grid(&self) -> &Grid2D<T> {
        self.perp.grid()
    }

    /// No source and no boundary data.
    pub fn is_homogeneous(&self) -> bool {
        self.source.is_none() && !self.perp.has_data()
    }

    pub fn h_norm(&self, u: &[T]) -> T {
        weighted_norm(u, self.perp.h_diag())
    }

    fn maxit(&self) -> usize {
        self.cg.maxit.unwrap_or(10 * self.grid().len())
    }

    /// State at `t = 0` from the initial condition (zero when unset).
    pub fn initial_state(&self) -> SolverState<T> {
        let u = match &self.initial {
            Some(f) => self.grid().sample(|x, y| f(x, y)),
            None => vec![T::zero(); self.grid().len()],
        };
        SolverState::new(self, u, T::zero()).expect("grid-sized vector")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics<T> {
    pub step: usize,
    pub t: T,
    pub h_norm: T,
    pub cg_iters: usize,
    pub cg_residual: T,
}

#[derive(Clone, Debug)]
pub struct SolverState<T> {
    pub u: Vec<T>,
    pub t: T,
    pub step: usize,
    /// Entry 0 describes the initial state.
    pub diagnostics: Vec<StepDiagnostics<T>>,
}

impl<T: Real> SolverState<T> {
    pub fn new(problem: &Problem<T>, u: Vec<T>, t: T) -> Result<Self> {
        check_len(problem.grid().len(), u.len())?;
        let d = StepDiagnostics { step: 0, t, h_norm: problem.h_norm(&u), cg_iters: 0, cg_residual: T::zero() };
        Ok(SolverState { u, t, step: 0, diagnostics: vec![d] })
    }

    pub fn h_norms(&self) -> Vec<T> {
        self.diagnostics.iter().map(|d| d.h_norm).collect()
    }
}

/// Advances `state` by one step of size `dt`.
pub fn step<T: Real>(problem: &Problem<T>, state: &mut SolverState<T>, dt: T) -> Result<()> {
    let n = problem.grid().len();
    check_len(n, state.u.len())?;
    let wrap = |e: Error, s: &SolverState<T>| Error::Step { step: s.step + 1, t: s.t.to_f64_lossy(), source: Box::new(e) };
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let t1 = state.t + dt;
    let grid = problem.grid();
    let perp = &problem.perp;

    let mut rhs = state.u.clone();
    if let Some(f) = &problem.source {
        for (k, r) in rhs.iter_mut().enumerate() {
            let (x, y) = grid.coords(k);
            *r = *r + dt * f(x, y, t1);
        }
    }
    if perp.has_data() {
        let forcing = perp.boundary_forcing(&perp.boundary_vector(t1));
        axpy(dt, &forcing, &mut rhs);
    }

    let (u_half, stats) = if perp.kappa_perp == T::zero() {
        (rhs, CgStats { iters: 0, residual: T::zero(), converged: true })
    } else {
        let apply = |v: &[T], out: &mut [T]| {
            perp.apply_homogeneous(v, out);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o = vi - dt * *o;
            }
        };
        let (x, stats) = cg_solve_hnorm(apply, &rhs, &state.u, perp.h_diag(), problem.cg.rtol, problem.maxit())
            .map_err(|e| wrap(e, state))?;
        if !stats.converged {
            let e = Error::CgNotConverged { iters: stats.iters, residual: stats.residual.to_f64_lossy() };
            return Err(wrap(e, state));
        }
        (x, stats)
    };

    let u_next = match &problem.map {
        Some(m) => update_with(&u_half, &m.forward, &m.backward, dt * problem.penalty.tau_par * problem.penalty.kappa_par),
        None => u_half,
    };
    if u_next.iter().any(|v| !v.is_finite()) {
        return Err(wrap(Error::NonFinite("solution"), state));
    }
    state.u = u_next;
    state.t = t1;
    state.step += 1;
    state.diagnostics.push(StepDiagnostics {
        step: state.step,
        t: t1,
        h_norm: problem.h_norm(&state.u),
        cg_iters: stats.iters,
        cg_residual: stats.residual,
    });
    Ok(())
}

/// Steps from the initial condition to `t_final` with uniform `dt`,
/// shortening the last step to land exactly on `t_final`.
pub fn run<T: Real>(problem: &Problem<T>, dt: T, t_final: T) -> Result<SolverState<T>> {
    let mut state = problem.initial_state();
    run_from(problem, &mut state, dt, t_final, |_| ControlFlow::Continue(()))?;
    Ok(state)
}

/// Like [`run`] but continues `state` and calls `observe` after every step;
/// `Break` stops early.
pub fn run_from<T: Real>(
    problem: &Problem<T>,
    state: &mut SolverState<T>,
    dt: T,
    t_final: T,
    mut observe: impl FnMut(&SolverState<T>) -> ControlFlow<()>,
) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= state.t) {
        return Err(Error::InvalidParameter(format!("t_final {t_final} precedes current time {}", state.t)));
    }
    let t0 = state.t;
    let span = t_final - t0;
    let ratio = span / dt;
    let slack = T::lit(1e-9);
    let mut full = ratio.floor();
    if ratio - full > T::one() - slack {
        full = full + T::one();
    }
    let full = full.to_usize().unwrap_or(0);
    let partial = span - T::from_count(full) * dt > slack * dt;
    let total = full + usize::from(partial);
    for k in 1..=total {
        let target = if k == total { t_final } else { t0 + T::from_count(k) * dt };
        let h = target - state.t;
        step(problem, state, h)?;
        state.t = target;
        if let Some(d) = state.diagnostics.last_mut() {
            d.t = target;
        }
        if observe(state).is_break() {
            break;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport<T> {
    pub steps: usize,
    /// First step whose H-norm exceeds its predecessor beyond the tolerance.
    pub first_violation: Option<usize>,
    /// Largest relative growth `‖u^{l+1}‖_H / ‖u^l‖_H - 1` seen.
    pub max_growth: T,
    pub passed: bool,
}

/// Checks `‖u^{l+1}‖_H ≤ (1 + rel_tol) ‖u^l‖_H` over a run. Only meaningful
/// for homogeneous problems, so anything else is rejected.
pub fn energy_audit<T: Real>(problem: &Problem<T>, state: &SolverState<T>, rel_tol: T) -> Result<EnergyReport<T>> {
    if !problem.is_homogeneous() {
        return Err(Error::InvalidParameter(
            "energy audit needs a homogeneous problem (no source, no boundary data)".into(),
        ));
    }
    Ok(audit_norms(&state.h_norms(), rel_tol))
}

pub fn audit_norms<T: Real>(norms: &[T], rel_tol: T) -> EnergyReport<T> {
    let mut first_violation = None;
    let mut max_growth = T::neg_infinity();
    for (l, w) in norms.windows(2).enumerate() {
        let growth = if w[0] > T::zero() { w[1] / w[0] - T::one() } else if w[1] > T::zero() { T::infinity() } else { T::zero() };
        max_growth = max_growth.max(growth);
        if w[1] > w[0] * (T::one() + rel_tol) && first_violation.is_none() {
            first_violation = Some(l + 1);
        }
    }
    let steps = norms.len().saturating_sub(1);
    if steps == 0 {
        max_growth = T::zero();
    }
    EnergyReport { steps, first_violation, max_growth, passed: first_violation.is_none() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perp::Side;
    use crate::sbp::Order;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn cg_identity_one_iteration() {
        let b = [1.0f64, -2.0, 3.0];
        let (x, s) = cg_solve_hnorm(|v, o| o.copy_from_slice(v), &b, &[0.0; 3], &[0.5; 3], 1e-12, 10).unwrap();
        assert_eq!(x, b);
        assert_eq!(s.iters, 1);
        assert!(s.converged);
    }

    #[test]
    fn cg_two_by_two() {
        // H-self-adjoint A = H⁻¹ S with S SPD and H = diag(½, ½)
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = s.clone() * 2.0;
        let b = [1.0f64, 3.0];
        let (x, st) = cg_solve_hnorm(
            |v, o| {
                let r = &a * DVector::from_column_slice(v);
                o.copy_from_slice(r.as_slice());
            },
            &b,
            &[0.0, 0.0],
            &[0.5, 0.5],
            1e-14,
            10,
        )
        .unwrap();
        let want = a.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        assert!(st.converged && st.iters <= 2);
        for k in 0..2 {
            assert!((x[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_reports_exhaustion_and_indefiniteness() {
        let (_, s) = cg_solve_hnorm(
            |v: &[f64], o: &mut [f64]| {
                for (k, (oi, vi)) in o.iter_mut().zip(v).enumerate() {
                    *oi = (k + 1) as f64 * vi;
                }
            },
            &[1.0; 5],
            &[0.0; 5],
            &[1.0; 5],
            1e-14,
            2,
        )
        .unwrap();
        assert!(!s.converged && s.iters == 2 && s.residual > 0.0);
        let neg = cg_solve_hnorm(|v: &[f64], o: &mut [f64]| o.iter_mut().zip(v).for_each(|(a, b)| *a = -b), &[1.0], &[0.0], &[1.0], 1e-10, 5);
        assert!(neg.is_err());
    }

    fn small(order: Order, kappa: f64) -> Problem<f64> {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, 13, 13).unwrap();
        Problem::new(PerpOperator::new(&g, order, kappa).unwrap())
    }

    #[test]
    fn kappa_zero_stage_one_is_explicit() {
        let p = small(Order::Second, 0.0).source(|x, y, t| x + 2.0 * y + t);
        let mut s = p.initial_state();
        step(&p, &mut s, 0.25).unwrap();
        let g = p.grid();
        for (k, &v) in s.u.iter().enumerate() {
            let (x, y) = g.coords(k);
            assert!((v - 0.25 * (x + 2.0 * y + 0.25)).abs() < 1e-15);
        }
        assert_eq!(s.diagnostics[1].cg_iters, 0);
    }

    #[test]
    fn zero_length_run_is_identity() {
        let p = small(Order::Fourth, 1.0).initial(|x, y| x * y);
        let s = run(&p, 0.1, 0.0).unwrap();
        assert_eq!(s.step, 0);
        assert_eq!(s.u, p.initial_state().u);
    }

    #[test]
    fn last_step_lands_on_t_final() {
        let p = small(Order::Second, 1.0).initial(|x, _| (std::f64::consts::PI * x).sin());
        let s = run(&p, 0.03, 0.1).unwrap();
        assert_eq!(s.step, 4);
        assert_eq!(s.t, 0.1);
        let s = run(&p, 0.1 / 3.0, 0.1).unwrap();
        assert_eq!(s.step, 3);
    }

    #[test]
    fn homogeneous_decay_is_monotone() {
        for order in [Order::Second, Order::Fourth] {
            let p = small(order, 1.0).initial(|x, y| (x * 37.0).sin() * (y * 11.0).cos() + x);
            for dt in [1e-4, 1.0, 10.0] {
                let s = run(&p, dt, 5.0 * dt).unwrap();
                let rep = energy_audit(&p, &s, 1e-12).unwrap();
                assert!(rep.passed, "{order:?} dt={dt}: {rep:?}");
            }
        }
    }

    #[test]
    fn audit_guards_and_flags() {
        let p = small(Order::Second, 1.0).source(|_, _, _| 1.0);
        let s = p.initial_state();
        assert!(energy_audit(&p, &s, 1e-12).is_err());
        let rep = audit_norms(&[3.0, 2.0, 2.0, 2.5, 1.0, 4.0], 1e-12);
        assert_eq!(rep.first_violation, Some(3));
        assert!(!rep.passed);
    }

    #[test]
    fn boundary_data_drives_steady_linear_profile() {
        // u = x is steady with matching Dirichlet data
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, 13, 13).unwrap();
        let data = Arc::new(|side: Side, _s: f64, _t: f64| if side == Side::Right { 1.0 } else { 0.0 });
        let perp = PerpOperator::new(&g, Order::Fourth, 1.0).unwrap().boundary_data(data);
        let p = Problem::new(perp).initial(|x, _| x);
        let s = run(&p, 0.01, 0.05).unwrap();
        for (k, &v) in s.u.iter().enumerate() {
            assert!((v - g.coords(k).0).abs() < 1e-9);
        }
    }
}
