use std::f64::consts::PI;

use aniso::harness::{mms_case, nimrod_grid, nimrod_map, nimrod_problem, MmsParams, NimrodMap};
use aniso::parallel::{apply_parallel_operator, ParallelPenalty};
use aniso::perp::{PerpOperator, YBoundary};
use aniso::sbp::Order;
use aniso::solver::{cg_solve_hnorm, run};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn parallel_operator_matches_dense_on_6x6_nimrod() {
    let grid = nimrod_grid(6).unwrap();
    let map = nimrod_map(&grid, NimrodMap::Traced, 1e-6).unwrap();
    let penalty = ParallelPenalty::new(&grid, 1.0);
    let n = grid.len();
    let mut pf = DMatrix::<f64>::zeros(n, n);
    let mut pb = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for c in 0..4 {
            pf[(k, map.forward[k].corners[c])] += map.forward[k].weights[c];
            pb[(k, map.backward[k].corners[c])] += map.backward[k].weights[c];
        }
    }
    let c = penalty.tau_par * penalty.kappa_par;
    let dense = (DMatrix::identity(n, n) - (pf + pb) * 0.5) * -c;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = apply_parallel_operator(&map, &penalty, &u).unwrap();
        let want = &dense * DVector::from_row_slice(&u);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12 * c, "{a} vs {b}");
        }
    }
}

#[test]
fn cg_matches_direct_solve_on_17x17_nimrod() {
    let grid = nimrod_grid(17).unwrap();
    let n = grid.len();
    let dt = grid.gx.dx * grid.gx.dx / 10.0;
    for order in [Order::Second, Order::Fourth] {
        let op = PerpOperator::new(&grid, order, 1.0).unwrap().y_boundary(YBoundary::Dirichlet);
        let h = op.h_diag().to_vec();
        let b = grid.sample(|x, y| (PI * x).cos() * (PI * y).cos() + 0.3 * x * y);
        let apply = |v: &[f64], out: &mut [f64]| {
            op.apply_homogeneous(v, out);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o = vi - dt * *o;
            }
        };
        let (x, stats) = cg_solve_hnorm(apply, &b, &vec![0.0; n], &h, 1e-10, 10 * n).unwrap();
        assert!(stats.converged);

        // (H + dt A⊥) x = H b with A⊥ = -H P⊥.
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            op.apply_homogeneous(&e, &mut col);
            for i in 0..n {
                a[(i, k)] = -h[i] * dt * col[i];
            }
            a[(k, k)] += h[k];
            e[k] = 0.0;
        }
        let hb = DVector::from_iterator(n, b.iter().zip(&h).map(|(v, w)| v * w));
        let direct = a.cholesky().expect("H + dt A is SPD").solve(&hb);
        let hn = |v: &mut dyn Iterator<Item = f64>| v.zip(&h).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
        let err = hn(&mut x.iter().zip(direct.iter()).map(|(p, q)| p - q));
        assert!(err <= 1e-9 * hn(&mut direct.iter().copied()), "order {order}: {err:e}");
    }
}

fn halving_ratio(solve: impl Fn(f64) -> Vec<f64>, dt: f64) -> f64 {
    let (a, b, c) = (solve(dt), solve(dt / 2.0), solve(dt / 4.0));
    let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d(&a, &b) / d(&b, &c)
}

#[test]
fn backward_euler_error_is_first_order_in_dt() {
    // Fixed grid, so only the temporal error changes between the runs. The
    // manufactured modes decay at rate ~2000, so dt must resolve that.
    let n = 21;
    let dx2 = (1.0 / (n - 1) as f64).powi(2);
    let ratio = halving_ratio(
        |dt| mms_case(Order::Second, n, 1.0, dt / dx2, 0.002, MmsParams::default()).unwrap().state.u,
        5e-5,
    );
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn split_scheme_error_is_first_order_in_dt() {
    let grid = nimrod_grid(17).unwrap();
    let map = nimrod_map(&grid, NimrodMap::Traced, 1e-6).unwrap();
    let ratio = halving_ratio(
        |dt| {
            let problem = nimrod_problem(Order::Second, 1.0, map.clone(), 1.0).unwrap();
            run(&problem, dt, 0.02).unwrap().u
        },
        0.004,
    );
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}
