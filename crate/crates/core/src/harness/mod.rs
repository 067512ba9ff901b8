//! Experiment drivers: manufactured solution, the NIMROD benchmark and its
//! variants, the perturbed slab, and Poincaré sections.

pub mod contour;
pub mod io;
pub mod table;

use std::f64::consts::{PI, TAU};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

pub use contour::{contour, Polyline};
pub use table::{fit_slope, parse_table, write_table, ConvergenceTable};

use crate::error::{Error, Result};
use crate::fieldline::{integrate, poincare_section, NimrodField, SlabField, Tolerance, TraceDomain};
use crate::grid::Grid2D;
use crate::parallel::{build_parallel_map, ParallelMap};
use crate::perp::{PerpOperator, Side, YBoundary};
use crate::sbp::Order;
use crate::solver::{run, run_from, Problem, SolverState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    Mms,
    Nimrod,
    NimrodIdentity,
    NimrodLimit,
    Slab,
    Trace,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Mms,
        Experiment::Nimrod,
        Experiment::NimrodIdentity,
        Experiment::NimrodLimit,
        Experiment::Slab,
        Experiment::Trace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Mms => "mms",
            Experiment::Nimrod => "nimrod",
            Experiment::NimrodIdentity => "nimrod-identity",
            Experiment::NimrodLimit => "nimrod-limit",
            Experiment::Slab => "slab",
            Experiment::Trace => "trace",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    fn is_convergence(self) -> bool {
        matches!(self, Experiment::Mms | Experiment::Nimrod | Experiment::NimrodIdentity | Experiment::NimrodLimit)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Manufactured solution `cos(2πt) sin(2π ω_x x + c_x) sin(2π ω_y y + c_y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmsParams {
    pub c_x: f64,
    pub c_y: f64,
    pub omega_x: f64,
    pub omega_y: f64,
}

impl Default for MmsParams {
    fn default() -> Self {
        MmsParams { c_x: 1.0, c_y: 0.0, omega_x: 7.0, omega_y: 6.0 }
    }
}

impl MmsParams {
    pub fn exact(&self, x: f64, y: f64, t: f64) -> f64 {
        (TAU * t).cos() * (TAU * self.omega_x * x + self.c_x).sin() * (TAU * self.omega_y * y + self.c_y).sin()
    }

    /// `∂u/∂t - κ ∇²u`.
    pub fn source(&self, kappa: f64, x: f64, y: f64, t: f64) -> f64 {
        let s = (TAU * self.omega_x * x + self.c_x).sin() * (TAU * self.omega_y * y + self.c_y).sin();
        let lap = -TAU * TAU * (self.omega_x.powi(2) + self.omega_y.powi(2));
        -TAU * (TAU * t).sin() * s - kappa * lap * (TAU * t).cos() * s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlabSettings {
    /// `(m, n, ε)` per mode.
    pub modes: Vec<(f64, f64, f64)>,
    pub dt: f64,
    /// Stop once a step changes `T` by less than this (relative l2).
    pub steady_tol: f64,
    pub contour_spacing: f64,
    /// Points whose temperature defines the highlighted contours.
    pub o_points: Vec<(f64, f64)>,
    /// θ of the reported profile.
    pub profile_theta: f64,
    /// ψ window of the flattening measurement.
    pub flat_window: (f64, f64),
    /// Island `(m, n)` whose band is located for the contour check.
    pub island: (f64, f64),
    pub island_seeds: usize,
    pub island_transits: usize,
}

impl Default for SlabSettings {
    fn default() -> Self {
        SlabSettings {
            modes: vec![(2.0, 1.0, 1.05e-3), (3.0, 2.0, 0.7e-3)],
            dt: 1.0,
            steady_tol: 1e-6,
            contour_spacing: 0.05,
            o_points: vec![(0.495, -PI), (0.675, 0.0)],
            profile_theta: 0.0,
            flat_window: (0.45, 0.7),
            island: (2.0, 1.0),
            island_seeds: 81,
            island_transits: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSettings {
    pub seeds: usize,
    pub transits: usize,
    pub psi_range: (f64, f64),
    pub theta: f64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        TraceSettings { seeds: 40, transits: 400, psi_range: (0.02, 0.98), theta: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub order: Order,
    pub resolutions: Vec<usize>,
    pub kappa_perp: Vec<f64>,
    pub kappa_par: f64,
    /// `dt = dt_coeff Δx²` for the convergence studies.
    pub dt_coeff: f64,
    /// Final time; for the slab, the cap on the quasi-steady search.
    pub t_final: f64,
    /// Field-line integrator tolerance (absolute and relative).
    pub tol: f64,
    pub output_dir: Option<PathBuf>,
    pub mms: MmsParams,
    pub slab: SlabSettings,
    pub trace: TraceSettings,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let nimrod_n = vec![17, 25, 33, 41, 49, 57];
        let t_nimrod = 1.0 / (2.0 * PI * PI);
        let (resolutions, kappa_perp, dt_coeff, t_final) = match experiment {
            Experiment::Mms => (vec![21, 41, 61, 81], vec![1.0], 0.01, 0.1),
            Experiment::Nimrod => (nimrod_n, vec![1.0, 1e-3, 1e-6, 1e-9], 0.1, t_nimrod),
            Experiment::NimrodIdentity => (nimrod_n, vec![1.0, 1e-3, 1e-6], 0.1, t_nimrod),
            Experiment::NimrodLimit => (nimrod_n, vec![0.0], 0.1, t_nimrod),
            Experiment::Slab => (vec![201], vec![1e-6], 1.0, 5000.0),
            Experiment::Trace => (vec![], vec![], 1.0, 1.0),
        };
        ExperimentConfig {
            experiment,
            order: Order::Second,
            resolutions,
            kappa_perp,
            kappa_par: 1.0,
            dt_coeff,
            t_final,
            tol: 1e-6,
            output_dir: None,
            mms: MmsParams::default(),
            slab: SlabSettings::default(),
            trace: TraceSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let e = self.experiment;
        if !finite_pos(self.tol) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if e == Experiment::Trace {
            let t = &self.trace;
            if t.seeds == 0 || t.transits == 0 {
                return bad("trace needs at least one seed and one transit".into());
            }
            if !(0.0 < t.psi_range.0 && t.psi_range.0 <= t.psi_range.1 && t.psi_range.1 < 1.0) {
                return bad(format!("seed psi range {:?} must lie inside (0, 1)", t.psi_range));
            }
            return self.validate_modes();
        }
        if self.resolutions.is_empty() {
            return bad("no resolutions given".into());
        }
        if self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("resolutions must be strictly increasing, got {:?}", self.resolutions));
        }
        let min = self.order.min_points();
        if let Some(&n) = self.resolutions.iter().find(|&&n| n < min) {
            return bad(format!("order {} needs n >= {min}, got {n}", self.order));
        }
        if self.kappa_perp.is_empty() {
            return bad("no kappa_perp values given".into());
        }
        if let Some(k) = self.kappa_perp.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return bad(format!("kappa_perp must be finite and nonnegative, got {k}"));
        }
        if !finite_pos(self.kappa_par) {
            return bad(format!("kappa_par must be positive, got {}", self.kappa_par));
        }
        if !finite_pos(self.t_final) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !finite_pos(self.dt_coeff) {
            return bad(format!("dt coefficient must be positive, got {}", self.dt_coeff));
        }
        if e.is_convergence() && self.resolutions.len() < 2 {
            return bad("a convergence study needs at least two resolutions".into());
        }
        match e {
            Experiment::Nimrod | Experiment::NimrodIdentity if self.kappa_perp.contains(&0.0) => {
                bad(format!("{e} needs kappa_perp > 0; use nimrod-limit for kappa_perp = 0"))
            }
            Experiment::NimrodLimit if self.kappa_perp.iter().any(|&k| k != 0.0) => {
                bad("nimrod-limit solves kappa_perp = 0 only".into())
            }
            Experiment::Slab => {
                let s = &self.slab;
                if self.resolutions.len() != 1 || self.kappa_perp.len() != 1 {
                    return bad("slab takes exactly one resolution and one kappa_perp".into());
                }
                if !finite_pos(s.dt) || !finite_pos(s.steady_tol) || !finite_pos(s.contour_spacing) {
                    return bad("slab dt, steady tolerance and contour spacing must be positive".into());
                }
                if s.island_seeds == 0 || s.island_transits == 0 {
                    return bad("island search needs seeds and transits".into());
                }
                self.validate_modes()
            }
            _ => Ok(()),
        }
    }

    fn validate_modes(&self) -> Result<()> {
        if self.slab.modes.iter().any(|&(m, n, eps)| !(m.is_finite() && n.is_finite() && eps.is_finite())) {
            return Err(Error::Config("slab modes must be finite".into()));
        }
        Ok(())
    }

    /// `key = value` lines describing every setting that shaped the output.
    pub fn header(&self) -> Vec<String> {
        let list = |v: &[f64]| v.iter().map(|k| format!("{k:e}")).collect::<Vec<_>>().join(",");
        let mut h = vec![
            format!("experiment = {}", self.experiment),
            format!("order = {}", self.order),
            format!(
                "resolutions = {}",
                self.resolutions.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("kappa_perp = {}", list(&self.kappa_perp)),
            format!("kappa_par = {:e}", self.kappa_par),
            format!("t_final = {:e}", self.t_final),
            format!("tol = {:e}", self.tol),
            "cg_rtol = 1e-10".to_string(),
        ];
        match self.experiment {
            Experiment::Mms => {
                let m = &self.mms;
                h.push(format!("dt = {:e} dx^2", self.dt_coeff));
                h.push(format!("mms = c_x {} c_y {} omega_x {} omega_y {}", m.c_x, m.c_y, m.omega_x, m.omega_y));
                h.push("domain = [0,1]x[0,1], dirichlet x, periodic y".into());
                h.push("error = relative l2 over all grid points".into());
            }
            Experiment::Nimrod | Experiment::NimrodIdentity | Experiment::NimrodLimit => {
                h.push(format!("dt = {:e} dx^2", self.dt_coeff));
                h.push("domain = [-0.5,0.5]x[-0.5,0.5], dirichlet x and y".into());
                h.push("error = relative l2 over all grid points".into());
            }
            Experiment::Slab => {
                let s = &self.slab;
                h.push(format!("dt = {:e}", s.dt));
                h.push(format!("modes = {:?}", s.modes));
                h.push(format!("steady_tol = {:e}", s.steady_tol));
                h.push("domain = psi [0,1] dirichlet 0/1, theta [-pi,pi] periodic".into());
            }
            Experiment::Trace => {
                let t = &self.trace;
                h.push(format!("modes = {:?}", self.slab.modes));
                h.push(format!("seeds = {} psi {:?} theta {}", t.seeds, t.psi_range, t.theta));
                h.push(format!("transits = {}", t.transits));
            }
        }
        h
    }

    fn tolerance(&self) -> Tolerance<f64> {
        Tolerance::both(self.tol)
    }
}

/// One solve of a convergence study.
#[derive(Clone, Debug)]
pub struct Case {
    pub n: usize,
    pub kappa_perp: f64,
    pub error: f64,
    pub grid: Grid2D<f64>,
    pub state: SolverState<f64>,
    pub exact: Vec<f64>,
}

/// Relative l2 distance over all grid points.
pub fn relative_error(u: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = u.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

pub fn mms_case(order: Order, n: usize, kappa: f64, dt_coeff: f64, t_final: f64, mms: MmsParams) -> Result<Case> {
    let grid = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, n, n)?;
    let data = Arc::new(move |side: Side, y: f64, t: f64| match side {
        Side::Left => mms.exact(0.0, y, t),
        Side::Right => mms.exact(1.0, y, t),
        _ => 0.0,
    });
    let perp = PerpOperator::new(&grid, order, kappa)?.boundary_data(data);
    let problem = Problem::new(perp)
        .source(move |x, y, t| mms.source(kappa, x, y, t))
        .initial(move |x, y| mms.exact(x, y, 0.0));
    let dt = dt_coeff * grid.gx.dx * grid.gx.dx;
    let state = run(&problem, dt, t_final)?;
    let exact = grid.sample(|x, y| mms.exact(x, y, t_final));
    Ok(Case { n, kappa_perp: kappa, error: relative_error(&state.u, &exact), grid, state, exact })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NimrodMap {
    Traced,
    Identity,
}

pub fn nimrod_grid(n: usize) -> Result<Grid2D<f64>> {
    Grid2D::rectangle(-0.5, 0.5, -0.5, 0.5, n, n)
}

/// `(1 - exp(-2 t κ π²)) ψ / κ`, or its limit `2π² t ψ` at `κ = 0`.
pub fn nimrod_exact(kappa: f64, x: f64, y: f64, t: f64) -> f64 {
    let psi = NimrodField::psi(x, y);
    if kappa == 0.0 {
        2.0 * PI * PI * t * psi
    } else {
        -(-2.0 * t * kappa * PI * PI).exp_m1() * psi / kappa
    }
}

pub fn nimrod_map(grid: &Grid2D<f64>, kind: NimrodMap, tol: f64) -> Result<ParallelMap<f64>> {
    match kind {
        NimrodMap::Traced => build_parallel_map(grid, &NimrodField, TAU, Tolerance::both(tol), false),
        NimrodMap::Identity => Ok(ParallelMap::identity(grid)),
    }
}

/// The benchmark problem: homogeneous Dirichlet data on all four sides,
/// source `2π² ψ`, zero initial data.
pub fn nimrod_problem(order: Order, kappa: f64, map: ParallelMap<f64>, kappa_par: f64) -> Result<Problem<f64>> {
    let grid = map.grid.clone();
    let zero = Arc::new(|_: Side, _: f64, _: f64| 0.0);
    let perp = PerpOperator::new(&grid, order, kappa)?.y_boundary(YBoundary::Dirichlet).boundary_data(zero);
    Ok(Problem::new(perp).parallel(map, kappa_par)?.source(|x, y, _| 2.0 * PI * PI * NimrodField::psi(x, y)))
}

pub fn nimrod_case(
    order: Order,
    kappa: f64,
    map: &ParallelMap<f64>,
    kappa_par: f64,
    dt_coeff: f64,
    t_final: f64,
) -> Result<Case> {
    let problem = nimrod_problem(order, kappa, map.clone(), kappa_par)?;
    let grid = map.grid.clone();
    let dt = dt_coeff * grid.gx.dx * grid.gx.dx;
    let state = run(&problem, dt, t_final)?;
    let exact = grid.sample(|x, y| nimrod_exact(kappa, x, y, t_final));
    Ok(Case { n: grid.nx(), kappa_perp: kappa, error: relative_error(&state.u, &exact), grid, state, exact })
}

#[derive(Clone, Debug)]
pub struct ConvergenceOutcome {
    pub tables: Vec<ConvergenceTable>,
    /// Finest-resolution solve per `kappa_perp`.
    pub finest: Vec<Case>,
}

/// Runs `mms`, `nimrod`, `nimrod-identity` or `nimrod-limit`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome> {
    cfg.validate()?;
    let e = cfg.experiment;
    if !e.is_convergence() {
        return Err(Error::Config(format!("{e} is not a convergence study")));
    }
    let cases: Vec<Vec<Case>> = cfg
        .resolutions
        .par_iter()
        .map(|&n| -> Result<Vec<Case>> {
            let map = match e {
                Experiment::Mms => None,
                Experiment::NimrodIdentity => Some(nimrod_map(&nimrod_grid(n)?, NimrodMap::Identity, cfg.tol)?),
                _ => Some(nimrod_map(&nimrod_grid(n)?, NimrodMap::Traced, cfg.tol)?),
            };
            cfg.kappa_perp
                .iter()
                .map(|&k| match &map {
                    None => mms_case(cfg.order, n, k, cfg.dt_coeff, cfg.t_final, cfg.mms),
                    Some(m) => nimrod_case(cfg.order, k, m, cfg.kappa_par, cfg.dt_coeff, cfg.t_final),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut tables = Vec::new();
    let mut finest = Vec::new();
    for (ki, &k) in cfg.kappa_perp.iter().enumerate() {
        tables.push(ConvergenceTable {
            label: format!("{e} order {} kappa_perp {k:e}", cfg.order),
            order: cfg.order.as_usize(),
            kappa_perp: k,
            rows: cases.iter().map(|c| (c[ki].n, c[ki].error)).collect(),
        });
    }
    if let Some(last) = cases.into_iter().last() {
        finest = last;
    }
    Ok(ConvergenceOutcome { tables, finest })
}

pub fn run_mms(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome> {
    if cfg.experiment != Experiment::Mms {
        return Err(Error::Config(format!("run_mms called with {}", cfg.experiment)));
    }
    run_convergence(cfg)
}

pub fn run_nimrod(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome> {
    if !matches!(cfg.experiment, Experiment::Nimrod | Experiment::NimrodIdentity | Experiment::NimrodLimit) {
        return Err(Error::Config(format!("run_nimrod called with {}", cfg.experiment)));
    }
    run_convergence(cfg)
}

pub fn slab_grid(n: usize) -> Result<Grid2D<f64>> {
    Grid2D::rectangle(0.0, 1.0, -PI, PI, n, n)
}

#[derive(Clone, Debug)]
pub struct SlabOutcome {
    pub grid: Grid2D<f64>,
    pub state: SolverState<f64>,
    /// Whether the steady tolerance was met before `t_final`.
    pub steady: bool,
    /// `(ψ, T)` along `θ = profile_theta`.
    pub profile: Vec<(f64, f64)>,
    /// Smallest one-sided `dT/dψ` inside the flattening window.
    pub min_slope: f64,
    /// `max |T - ψ|`; zero for the exact unperturbed steady state.
    pub ramp_deviation: f64,
    pub contours: Vec<(f64, Vec<Polyline>)>,
    /// Temperatures at the O-points and their contours.
    pub o_contours: Vec<(f64, Vec<Polyline>)>,
    /// ψ extent of the located island, if any orbit was trapped.
    pub island_band: Option<(f64, f64)>,
}

/// Slab run from the ramp `T = ψ` to a quasi-steady state.
pub fn run_slab(cfg: &ExperimentConfig) -> Result<SlabOutcome> {
    cfg.validate()?;
    if cfg.experiment != Experiment::Slab {
        return Err(Error::Config(format!("run_slab called with {}", cfg.experiment)));
    }
    let s = &cfg.slab;
    let n = cfg.resolutions[0];
    let grid = slab_grid(n)?;
    let field = crate::fieldline::slab_field(&s.modes);
    let map = build_parallel_map(&grid, &field, TAU, cfg.tolerance(), true)?;
    let data = Arc::new(|side: Side, _: f64, _: f64| if side == Side::Right { 1.0 } else { 0.0 });
    let perp = PerpOperator::new(&grid, cfg.order, cfg.kappa_perp[0])?.boundary_data(data);
    let problem = Problem::new(perp).parallel(map, cfg.kappa_par)?.initial(|x, _| x);

    let mut state = problem.initial_state();
    let mut prev = state.u.clone();
    let mut steady = false;
    run_from(&problem, &mut state, s.dt, cfg.t_final, |st| {
        let change = relative_error(&st.u, &prev);
        prev.copy_from_slice(&st.u);
        if change < s.steady_tol {
            steady = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;

    let u = &state.u;
    let ny = grid.ny();
    let j = (0..ny)
        .min_by(|&a, &b| {
            let da = (grid.gy.point(a) - s.profile_theta).abs();
            let db = (grid.gy.point(b) - s.profile_theta).abs();
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    let profile: Vec<(f64, f64)> = (0..grid.nx()).map(|i| (grid.gx.point(i), u[i * ny + j])).collect();
    let min_slope = profile
        .windows(2)
        .filter(|w| w[0].0 >= s.flat_window.0 - 1e-12 && w[1].0 <= s.flat_window.1 + 1e-12)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .fold(f64::INFINITY, f64::min);
    let ramp_deviation = u
        .iter()
        .enumerate()
        .map(|(k, v)| (v - grid.coords(k).0).abs())
        .fold(0.0, f64::max);

    let mut contours = Vec::new();
    let mut level = s.contour_spacing;
    while level < 1.0 - 1e-12 {
        contours.push((level, contour(&grid, u, level)));
        level += s.contour_spacing;
    }
    let o_contours = s
        .o_points
        .iter()
        .map(|&(x, y)| {
            let c = contour::interpolate(&grid, u, x, y);
            (c, contour(&grid, u, c))
        })
        .collect();
    let island_band = island_band(&field, s.island, -PI, s.island_seeds, s.island_transits, cfg.tolerance())?;
    Ok(SlabOutcome { grid, state, steady, profile, min_slope, ramp_deviation, contours, o_contours, island_band })
}

/// ψ extent of the `(m, n)` island whose O-point lies on `θ = theta_o`.
///
/// Seeds on `θ = theta_o` around `ψ = n/m` count as trapped when their
/// island phase `mθ - nζ` never reaches the X-point phase `π` over
/// `transits` periods.
pub fn island_band(
    field: &SlabField<f64>,
    (m, n): (f64, f64),
    theta_o: f64,
    seeds: usize,
    transits: usize,
    tol: Tolerance<f64>,
) -> Result<Option<(f64, f64)>> {
    let centre = n / m;
    let half = (0.5 * centre).min(0.5 * (1.0 - centre)).min(0.15);
    let phase0 = m * theta_o;
    let orbits: Vec<Option<(f64, f64)>> = (0..seeds)
        .into_par_iter()
        .map(|k| -> Result<Option<(f64, f64)>> {
            let frac = if seeds == 1 { 0.5 } else { k as f64 / (seeds - 1) as f64 };
            let mut p = (centre - half + 2.0 * half * frac, theta_o);
            let (mut lo, mut hi) = (p.0, p.0);
            for transit in 1..=transits {
                p = integrate(field, p, 0.0, TAU, tol)?.0;
                // θ is not wrapped here, so the phase is continuous
                let phase = m * p.1 - n * TAU * transit as f64 - phase0;
                if !(0.0..=1.0).contains(&p.0) || phase.abs() >= PI {
                    return Ok(None);
                }
                lo = lo.min(p.0);
                hi = hi.max(p.0);
            }
            Ok(Some((lo, hi)))
        })
        .collect::<Result<_>>()?;
    Ok(orbits.into_iter().flatten().reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))))
}

/// Poincaré sections of the slab field from seeds along `θ = theta`.
pub fn run_trace(cfg: &ExperimentConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    cfg.validate()?;
    let t = &cfg.trace;
    let field = crate::fieldline::slab_field(&cfg.slab.modes);
    let seeds: Vec<(f64, f64)> = (0..t.seeds)
        .map(|k| {
            let frac = if t.seeds == 1 { 0.5 } else { k as f64 / (t.seeds - 1) as f64 };
            (t.psi_range.0 + frac * (t.psi_range.1 - t.psi_range.0), t.theta)
        })
        .collect();
    let domain = TraceDomain { x: (0.0, 1.0), y: (-PI, PI), y_periodic: true };
    let sections: Vec<Vec<Vec<(f64, f64)>>> = seeds
        .par_iter()
        .map(|&s| poincare_section(&field, &[s], t.transits, cfg.tolerance(), &domain))
        .collect::<Result<_>>()?;
    Ok(sections.into_iter().flatten().collect())
}

/// Output of any experiment.
#[derive(Clone, Debug)]
pub enum Report {
    Convergence(ConvergenceOutcome),
    Slab(Box<SlabOutcome>),
    Trace(Vec<Vec<(f64, f64)>>),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        Experiment::Slab => Ok(Report::Slab(Box::new(run_slab(cfg)?))),
        Experiment::Trace => Ok(Report::Trace(run_trace(cfg)?)),
        _ => Ok(Report::Convergence(run_convergence(cfg)?)),
    }
}

fn file_kappa(k: f64) -> String {
    format!("{k:e}")
}

/// Writes every artifact of `report` under `dir`; returns the paths.
pub fn write_report(cfg: &ExperimentConfig, report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let header = cfg.header();
    let mut written = Vec::new();
    let name = cfg.experiment.name();
    match report {
        Report::Convergence(out) => {
            for t in &out.tables {
                let p = dir.join(format!("{name}_p{}_k{}.tsv", cfg.order, file_kappa(t.kappa_perp)));
                write_table(t, &header, &p)?;
                written.push(p);
            }
            for c in &out.finest {
                let stem = format!("{name}_p{}_k{}_n{}", cfg.order, file_kappa(c.kappa_perp), c.n);
                let p = dir.join(format!("{stem}_field.tsv"));
                io::write_field(&c.state.u, &c.grid, &header, &p)?;
                written.push(p);
                let p = dir.join(format!("{stem}_diagnostics.tsv"));
                io::write_diagnostics(&c.state, &header, &p)?;
                written.push(p);
            }
        }
        Report::Slab(out) => {
            let mut h = header.clone();
            h.push(format!("t_reached = {:e}", out.state.t));
            h.push(format!("steady = {}", out.steady));
            h.push(format!("min_slope = {:.6}", out.min_slope));
            if let Some((lo, hi)) = out.island_band {
                h.push(format!("island_band = {lo:.6},{hi:.6}"));
            }
            let p = dir.join("slab_field.tsv");
            io::write_field(&out.state.u, &out.grid, &h, &p)?;
            written.push(p);
            let p = dir.join("slab_contours.csv");
            io::write_contours(&out.contours, &h, &p)?;
            written.push(p);
            let p = dir.join("slab_o_contours.csv");
            io::write_contours(&out.o_contours, &h, &p)?;
            written.push(p);
            let p = dir.join("slab_diagnostics.tsv");
            io::write_diagnostics(&out.state, &h, &p)?;
            written.push(p);
            let p = dir.join("slab_profile.tsv");
            write_profile(&out.profile, &h, &p)?;
            written.push(p);
            let mut tc = cfg.clone();
            tc.experiment = Experiment::Trace;
            let sections = run_trace(&tc)?;
            let p = dir.join("slab_poincare.tsv");
            io::write_poincare(&sections, &tc.header(), &p)?;
            written.push(p);
        }
        Report::Trace(sections) => {
            let p = dir.join("poincare.tsv");
            io::write_poincare(sections, &header, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

fn write_profile(profile: &[(f64, f64)], header: &[String], path: &Path) -> Result<()> {
    use std::io::Write;
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for h in header {
        writeln!(f, "# {h}").map_err(io)?;
    }
    writeln!(f, "psi\tT").map_err(io)?;
    for (x, v) in profile {
        writeln!(f, "{x:.12e}\t{v:.12e}").map_err(io)?;
    }
    f.flush().map_err(io)
}
