use std::f64::consts::TAU;
use std::sync::OnceLock;

use aniso::fieldline::{integrate, NimrodField, Tolerance};
use aniso::grid::{h_diagonal, h_norm, l2_norm, Grid2D, NormWeights};
use aniso::kron::{apply_x, apply_y};
use aniso::parallel::{
    apply_map, apply_parallel_operator, build_parallel_map, operator_norm_check, parallel_update, Direction,
    ParallelMap, ParallelPenalty, Stencil,
};
use aniso::perp::{PerpOperator, YBoundary};
use aniso::sbp::{build_sbp, build_sbp_const, Order};
use aniso::solver::{cg_solve_hnorm, energy_audit, step, Problem, SolverState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn order() -> impl Strategy<Value = Order> {
    prop_oneof![Just(Order::Second), Just(Order::Fourth)]
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

/// Grid size admissible for `order`, capped at `max`.
fn sized(max: usize) -> impl Strategy<Value = (Order, usize, usize)> {
    order().prop_flat_map(move |o| {
        let lo = o.min_points();
        (Just(o), lo..=max.max(lo), lo..=max.max(lo))
    })
}

fn nimrod_grid(n: usize) -> Grid2D<f64> {
    Grid2D::rectangle(-0.5, 0.5, -0.5, 0.5, n, n).unwrap()
}

fn dense_action(n: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        f(&e, &mut col);
        a.set_column(k, &DVector::from_row_slice(&col));
        e[k] = 0.0;
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_bijection(nx in 2usize..30, ny in 2usize..30) {
        let g = Grid2D::rectangle(0.0, 1.0, -1.0, 1.0, nx, ny).unwrap();
        let mut seen = vec![false; g.len()];
        for i in 0..nx {
            for j in 0..ny {
                let k = g.flat_index(i, j).unwrap();
                prop_assert!(!seen[k]);
                seen[k] = true;
                prop_assert_eq!(g.unflatten(k).unwrap(), (i, j));
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn trapezoid_integrates_area(nx in 2usize..40, ny in 2usize..40, lx in 0.1..5.0f64, ly in 0.1..5.0f64) {
        let g = Grid2D::rectangle(0.0, lx, 0.0, ly, nx, ny).unwrap();
        let wx = NormWeights::trapezoid(nx, g.gx.dx);
        let wy = NormWeights::trapezoid(ny, g.gy.dx);
        let one = h_norm(&vec![1.0; g.len()], &g, &wx, &wy).unwrap();
        prop_assert!((one * one - lx * ly).abs() <= 1e-12 * lx * ly);
    }

    #[test]
    fn norm_equivalence((o, nx, ny) in sized(20), seed in vector(400)) {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, nx, ny).unwrap();
        let wx = build_sbp_const(o, nx, g.gx.dx, 1.0).unwrap().h;
        let wy = build_sbp_const(o, ny, g.gy.dx, 1.0).unwrap().h;
        let u: Vec<f64> = seed.iter().cycle().take(g.len()).copied().collect();
        prop_assume!(u.iter().any(|&v| v != 0.0));
        let ratio = (l2_norm(&u, &g).unwrap() / h_norm(&u, &g, &wx, &wy).unwrap()).powi(2);
        let lo = 1.0 / (wx.max() * wy.max());
        let hi = 1.0 / (wx.min() * wy.min());
        prop_assert!(ratio >= lo * (1.0 - 1e-12) && ratio <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn sbp_first_derivative_identity(o in order(), extra in 0usize..30, variable in any::<bool>()) {
        let n = o.min_points() + extra;
        let dx = 1.0 / (n - 1) as f64;
        let kappa: Vec<f64> = (0..n).map(|j| if variable { 1.0 + (j as f64 * dx).sin().powi(2) } else { 1.0 }).collect();
        let ops = build_sbp(o, n, dx, &kappa).unwrap();
        let h = DMatrix::from_diagonal(&DVector::from_vec(ops.norm_diagonal()));
        let q = &h * ops.d1.to_dense();
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = -1.0;
        b[(n - 1, n - 1)] = 1.0;
        prop_assert!((&q + q.transpose() - b).abs().max() <= 1e-12);
        let m = ops.m.to_dense();
        prop_assert!((&m - m.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn d1_polynomial_exactness(o in order(), extra in 0usize..20, shift in -1.0..1.0f64) {
        let n = o.min_points() + extra;
        let dx = 1.0 / (n - 1) as f64;
        let ops = build_sbp_const(o, n, dx, 1.0).unwrap();
        let p = o.as_usize();
        let brows = o.boundary_rows();
        for k in 0..=p {
            let u: Vec<f64> = (0..n).map(|j| (shift + j as f64 * dx).powi(k as i32)).collect();
            let mut du = vec![0.0; n];
            ops.apply_d1(&u, &mut du);
            for (j, &d) in du.iter().enumerate() {
                let exact = if k == 0 { 0.0 } else { k as f64 * (shift + j as f64 * dx).powi(k as i32 - 1) };
                let boundary = j < brows || j >= n - brows;
                if !boundary || k <= p / 2 {
                    prop_assert!((d - exact).abs() <= 1e-9, "k={} row={} {} vs {}", k, j, d, exact);
                }
            }
        }
    }

    #[test]
    fn kronecker_actions((o, nx, ny) in sized(12).prop_filter("small", |&(o, nx, ny)| o == Order::Fourth || (nx <= 8 && ny <= 8)), seed in vector(144)) {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, nx, ny).unwrap();
        let ox = build_sbp_const(o, nx, g.gx.dx, 1.0).unwrap();
        let oy = build_sbp_const(o, ny, g.gy.dx, 1.0).unwrap();
        let u: Vec<f64> = seed.iter().cycle().take(g.len()).copied().collect();
        let uv = DVector::from_row_slice(&u);
        let mut out = vec![0.0; g.len()];
        let scale = 1.0 / (g.gx.dx * g.gy.dx);
        apply_x(&ox.d2, ny, &u, &mut out);
        let dense = ox.d2.to_dense().kronecker(&DMatrix::identity(ny, ny)) * &uv;
        prop_assert!((DVector::from_row_slice(&out) - dense).amax() <= 1e-12 * scale);
        apply_y(&oy.d2, ny, &u, &mut out);
        let dense = DMatrix::<f64>::identity(nx, nx).kronecker(&oy.d2.to_dense()) * &uv;
        prop_assert!((DVector::from_row_slice(&out) - dense).amax() <= 1e-12 * scale);
    }

    #[test]
    fn perp_dissipative_matrix_free(
        (o, nx, ny) in sized(16),
        kappa in prop_oneof![Just(1.0), Just(1e-3), Just(1e-9)],
        dirichlet in any::<bool>(),
        seed in vector(256),
    ) {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 2.0, nx, ny).unwrap();
        let yb = if dirichlet { YBoundary::Dirichlet } else { YBoundary::Periodic };
        let op = PerpOperator::new(&g, o, kappa).unwrap().y_boundary(yb);
        let u: Vec<f64> = seed.iter().cycle().take(g.len()).copied().collect();
        let mut pu = vec![0.0; g.len()];
        op.apply_homogeneous(&u, &mut pu);
        let e: f64 = u.iter().zip(&pu).zip(op.h_diag()).map(|((a, b), h)| a * b * h).sum();
        let uu: f64 = u.iter().map(|a| a * a).sum();
        prop_assert!(e <= 1e-10 * uu * kappa / (g.gx.dx * g.gy.dx));
    }

    #[test]
    fn perp_linear_in_u_affine_in_g(
        (o, nx, ny) in sized(14),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        u in vector(196),
        v in vector(196),
        g1 in vector(196),
        g2 in vector(196),
    ) {
        let grid = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, nx, ny).unwrap();
        let n = grid.len();
        let op = PerpOperator::new(&grid, o, 0.7).unwrap().y_boundary(YBoundary::Dirichlet);
        let act = |w: &[f64]| {
            let mut out = vec![0.0; n];
            op.apply_homogeneous(w, &mut out);
            out
        };
        let (u, v) = (&u[..n], &v[..n]);
        let mix: Vec<f64> = u.iter().zip(v).map(|(x, y)| a * x + b * y).collect();
        let (pu, pv, pm) = (act(u), act(v), act(&mix));
        let scale = 1.0 / (grid.gx.dx * grid.gx.dx * grid.gy.dx * grid.gy.dx);
        for k in 0..n {
            prop_assert!((pm[k] - a * pu[k] - b * pv[k]).abs() <= 1e-11 * scale);
        }
        let (g1, g2) = (&g1[..n], &g2[..n]);
        let gm: Vec<f64> = g1.iter().zip(g2).map(|(x, y)| a * x + b * y).collect();
        let (f1, f2, fm) = (op.boundary_forcing(g1), op.boundary_forcing(g2), op.boundary_forcing(&gm));
        for k in 0..n {
            prop_assert!((fm[k] - a * f1[k] - b * f2[k]).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn fieldline_conserves_psi_and_reverses(x in -0.45..0.45f64, y in -0.45..0.45f64) {
        // Global, not local, error: shear near the separatrix turns small ψ
        // errors into phase drift of several hundred times the tolerance.
        let tol = 1e-8;
        let t = Tolerance::both(tol);
        let (end, _) = integrate(&NimrodField, (x, y), 0.0, TAU, t).unwrap();
        let psi0 = NimrodField::psi(x, y);
        prop_assert!((NimrodField::psi(end.0, end.1) - psi0).abs() <= 200.0 * tol);
        let (back, _) = integrate(&NimrodField, end, TAU, 0.0, t).unwrap();
        prop_assert!((back.0 - x).abs() <= 2e3 * tol && (back.1 - y).abs() <= 2e3 * tol);
    }

    #[test]
    fn traced_map_fixes_constants(n in 5usize..12, c in -3.0..3.0f64) {
        let g = nimrod_grid(n);
        let map = build_parallel_map(&g, &NimrodField, TAU, Tolerance::both(1e-6), false).unwrap();
        let u = vec![c; g.len()];
        for dir in [Direction::Forward, Direction::Backward] {
            for w in apply_map(&map, dir, &u).unwrap() {
                prop_assert!((w - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
        let p = apply_parallel_operator(&map, &ParallelPenalty::new(&g, 1.0), &u).unwrap();
        prop_assert!(p.iter().all(|v| v.abs() <= 1e-9 * c.abs().max(1.0)));
    }

    #[test]
    fn permutation_maps_contract(
        perm in (2usize..8).prop_flat_map(|n| Just((0..n * n).collect::<Vec<_>>()).prop_shuffle()),
        shift in 0usize..64,
        u in vector(64),
        log_dt in -6.0..6.0f64,
    ) {
        let n = (perm.len() as f64).sqrt().round() as usize;
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, n, n).unwrap();
        let len = g.len();
        let forward: Vec<Stencil<f64>> = perm.iter().map(|&k| Stencil::node(k)).collect();
        let backward: Vec<Stencil<f64>> = (0..len).map(|k| Stencil::node((k + shift) % len)).collect();
        let map = ParallelMap { grid: g.clone(), forward, backward };
        prop_assert!(operator_norm_check(&map, 50).passed);
        let u = &u[..len];
        let penalty = ParallelPenalty::new(&g, 1.0);
        let next = parallel_update(u, &map, &penalty, 10f64.powf(log_dt)).unwrap();
        let norm = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(norm(&next) <= norm(u) * (1.0 + 1e-14));
        let pu = apply_parallel_operator(&map, &penalty, u).unwrap();
        let e: f64 = u.iter().zip(&pu).map(|(a, b)| a * b).sum();
        prop_assert!(e <= 1e-12 * penalty.tau_par * norm(u).powi(2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cg_matches_dense(
        (o, nx, ny) in sized(12),
        kappa in prop_oneof![Just(1.0), Just(1e-4)],
        log_dt in -5.0..1.0f64,
        b in vector(144),
    ) {
        let g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, nx, ny).unwrap();
        let n = g.len();
        let op = PerpOperator::new(&g, o, kappa).unwrap().y_boundary(YBoundary::Dirichlet);
        let dt = 10f64.powf(log_dt);
        let apply = |v: &[f64], out: &mut [f64]| {
            op.apply_homogeneous(v, out);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o = vi - dt * *o;
            }
        };
        let b = &b[..n];
        let (x, stats) = cg_solve_hnorm(apply, b, &vec![0.0; n], op.h_diag(), 1e-12, 10 * n).unwrap();
        prop_assert!(stats.converged);
        let a = dense_action(n, apply);
        let direct = a.lu().solve(&DVector::from_row_slice(b)).unwrap();
        let h = op.h_diag();
        let hn = |w: &mut dyn Iterator<Item = f64>| w.zip(h).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
        let err = hn(&mut x.iter().zip(direct.iter()).map(|(p, q)| p - q));
        prop_assert!(err <= 1e-9 * hn(&mut direct.iter().copied()));
    }

    #[test]
    fn homogeneous_runs_never_grow(
        o in order(),
        kappa in prop_oneof![Just(1.0), Just(1e-3), Just(1e-9), Just(0.0)],
        dt in prop_oneof![Just(1e-4), Just(1.0), Just(10.0), Just(1e3)],
        u0 in vector(33 * 33),
    ) {
        let map = nimrod_map_33();
        let perp = PerpOperator::new(&map.grid, o, kappa).unwrap().y_boundary(YBoundary::Dirichlet);
        let problem = Problem::new(perp).parallel(map.clone(), 1.0).unwrap();
        let mut state = SolverState::new(&problem, u0, 0.0).unwrap();
        for _ in 0..5 {
            step(&problem, &mut state, dt).unwrap();
        }
        prop_assert!(energy_audit(&problem, &state, 1e-12).unwrap().passed);
    }
}

fn nimrod_map_33() -> &'static ParallelMap<f64> {
    static MAP: OnceLock<ParallelMap<f64>> = OnceLock::new();
    MAP.get_or_init(|| build_parallel_map(&nimrod_grid(33), &NimrodField, TAU, Tolerance::both(1e-6), false).unwrap())
}

/// Bilinear landing is many-to-one, so `‖P_f‖ > 1` and without enough
/// perpendicular smoothing a coarse grid admits growth.
#[test]
fn coarse_traced_map_can_amplify() {
    let g = nimrod_grid(12);
    let map = build_parallel_map(&g, &NimrodField, TAU, Tolerance::both(1e-6), false).unwrap();
    assert!(operator_norm_check(&map, 0).forward_norm > 1.5);
    let perp = PerpOperator::new(&g, Order::Second, 0.0).unwrap().y_boundary(YBoundary::Dirichlet);
    let problem = Problem::new(perp).parallel(map.clone(), 1.0).unwrap();
    // Top right singular vector of ½(P_f + P_b), which the update amplifies.
    let avg = (map.to_dense(Direction::Forward) + map.to_dense(Direction::Backward)) * 0.5;
    let svd = avg.svd(false, true);
    let k = svd.singular_values.imax();
    let u0: Vec<f64> = svd.v_t.unwrap().row(k).iter().copied().collect();
    let mut state = SolverState::new(&problem, u0, 0.0).unwrap();
    step(&problem, &mut state, 1.0).unwrap();
    let l2 = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(svd.singular_values[k] > 1.0);
    assert!(l2(&state.u) > 1.0, "l2 norm {}", l2(&state.u));
}

#[test]
fn h_diagonal_is_outer_product() {
    let wx = NormWeights::new(vec![0.5, 1.0, 0.5], 0.5).unwrap();
    let wy = NormWeights::new(vec![0.25, 2.0], 1.0).unwrap();
    assert_eq!(h_diagonal(&wx, &wy), vec![0.0625, 0.5, 0.125, 1.0, 0.0625, 0.5]);
}
