//! Layering of experiment settings: built-in defaults, then an optional
//! TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use aniso::harness::{Experiment, ExperimentConfig};
use aniso::sbp::Order;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub order: Option<usize>,
    pub resolutions: Option<Vec<usize>>,
    pub kappa_perp: Option<Vec<f64>>,
    pub kappa_par: Option<f64>,
    pub dt_coeff: Option<f64>,
    pub t_final: Option<f64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mms: MmsFile,
    #[serde(default)]
    pub slab: SlabFile,
    #[serde(default)]
    pub trace: TraceFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsFile {
    pub c_x: Option<f64>,
    pub c_y: Option<f64>,
    pub omega_x: Option<f64>,
    pub omega_y: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabFile {
    /// `[m, n, eps]` triples.
    pub modes: Option<Vec<[f64; 3]>>,
    pub dt: Option<f64>,
    pub steady_tol: Option<f64>,
    pub contour_spacing: Option<f64>,
    pub island_seeds: Option<usize>,
    pub island_transits: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub seeds: Option<usize>,
    pub transits: Option<usize>,
    pub psi_min: Option<f64>,
    pub psi_max: Option<f64>,
    pub theta: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Command-line overrides, all optional.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub order: Option<usize>,
    pub resolutions: Option<Vec<usize>>,
    pub kappa_perp: Option<Vec<f64>>,
    pub dt_coeff: Option<f64>,
    pub t_final: Option<f64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seeds: Option<usize>,
    pub transits: Option<usize>,
}

fn order(o: usize) -> Result<Order> {
    match o {
        2 => Ok(Order::Second),
        4 => Ok(Order::Fourth),
        _ => bail!("order must be 2 or 4, got {o}"),
    }
}

pub fn resolve(experiment: Experiment, file: Option<FileConfig>, flags: &Overrides) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::defaults(experiment);
    if let Some(f) = file {
        if let Some(o) = f.order {
            c.order = order(o)?;
        }
        if let Some(v) = f.resolutions {
            c.resolutions = v;
        }
        if let Some(v) = f.kappa_perp {
            c.kappa_perp = v;
        }
        if let Some(v) = f.kappa_par {
            c.kappa_par = v;
        }
        if let Some(v) = f.dt_coeff {
            c.dt_coeff = v;
        }
        if let Some(v) = f.t_final {
            c.t_final = v;
        }
        if let Some(v) = f.tol {
            c.tol = v;
        }
        c.output_dir = f.out.or(c.output_dir);
        let m = &mut c.mms;
        m.c_x = f.mms.c_x.unwrap_or(m.c_x);
        m.c_y = f.mms.c_y.unwrap_or(m.c_y);
        m.omega_x = f.mms.omega_x.unwrap_or(m.omega_x);
        m.omega_y = f.mms.omega_y.unwrap_or(m.omega_y);
        let s = &mut c.slab;
        if let Some(modes) = f.slab.modes {
            s.modes = modes.into_iter().map(|[m, n, e]| (m, n, e)).collect();
        }
        s.dt = f.slab.dt.unwrap_or(s.dt);
        s.steady_tol = f.slab.steady_tol.unwrap_or(s.steady_tol);
        s.contour_spacing = f.slab.contour_spacing.unwrap_or(s.contour_spacing);
        s.island_seeds = f.slab.island_seeds.unwrap_or(s.island_seeds);
        s.island_transits = f.slab.island_transits.unwrap_or(s.island_transits);
        let t = &mut c.trace;
        t.seeds = f.trace.seeds.unwrap_or(t.seeds);
        t.transits = f.trace.transits.unwrap_or(t.transits);
        t.psi_range.0 = f.trace.psi_min.unwrap_or(t.psi_range.0);
        t.psi_range.1 = f.trace.psi_max.unwrap_or(t.psi_range.1);
        t.theta = f.trace.theta.unwrap_or(t.theta);
    }
    if let Some(o) = flags.order {
        c.order = order(o)?;
    }
    if let Some(v) = &flags.resolutions {
        c.resolutions = v.clone();
    }
    if let Some(v) = &flags.kappa_perp {
        c.kappa_perp = v.clone();
    }
    c.dt_coeff = flags.dt_coeff.unwrap_or(c.dt_coeff);
    c.t_final = flags.t_final.unwrap_or(c.t_final);
    c.tol = flags.tol.unwrap_or(c.tol);
    c.trace.seeds = flags.seeds.unwrap_or(c.trace.seeds);
    c.trace.transits = flags.transits.unwrap_or(c.trace.transits);
    if flags.out.is_some() {
        c.output_dir = flags.out.clone();
    }
    c.validate()?;
    Ok(c)
}
