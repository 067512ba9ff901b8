use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use aniso::harness::{contour, run_experiment, write_report, Experiment, ExperimentConfig, Report};

mod config;

use config::{FileConfig, Overrides};

#[derive(Parser)]
#[command(name = "aniso", version, about = "Field-aligned anisotropic diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence of the perpendicular operator.
    Mms(Common),
    /// NIMROD benchmark with traced field lines.
    Nimrod(Common),
    /// NIMROD benchmark with the identity parallel map.
    NimrodIdentity(Common),
    /// NIMROD benchmark limit problem, kappa_perp = 0.
    NimrodLimit(Common),
    /// Perturbed slab run to a quasi-steady temperature.
    Slab(Common),
    /// Poincaré section of the slab field.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Accuracy order of the SBP operators (2 or 4).
    #[arg(long)]
    order: Option<usize>,
    /// Grid sizes n (n x n points), comma separated.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    /// Perpendicular diffusivities, comma separated.
    #[arg(long = "kappa-perp", value_delimiter = ',', allow_hyphen_values = true)]
    kappa_perp: Option<Vec<f64>>,
    /// c in dt = c * dx^2.
    #[arg(long = "dt-coeff")]
    dt_coeff: Option<f64>,
    /// Final time; for `slab`, the cap on the steady-state search
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Field-line integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    /// Number of field lines, seeded along theta
    #[arg(long)]
    seeds: Option<usize>,
    /// Toroidal periods per field line
    #[arg(long)]
    transits: Option<usize>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (experiment, common, seeds, transits) = match cli.command {
        Command::Mms(c) => (Experiment::Mms, c, None, None),
        Command::Nimrod(c) => (Experiment::Nimrod, c, None, None),
        Command::NimrodIdentity(c) => (Experiment::NimrodIdentity, c, None, None),
        Command::NimrodLimit(c) => (Experiment::NimrodLimit, c, None, None),
        Command::Slab(c) => (Experiment::Slab, c, None, None),
        Command::Trace(t) => (Experiment::Trace, t.common, t.seeds, t.transits),
    };
    let file = common.config.as_deref().map(FileConfig::load).transpose()?;
    let flags = Overrides {
        order: common.order,
        resolutions: common.resolutions,
        kappa_perp: common.kappa_perp,
        dt_coeff: common.dt_coeff,
        t_final: common.t_final,
        tol: common.tol,
        out: common.out,
        seeds,
        transits,
    };
    let cfg = config::resolve(experiment, file, &flags)?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));

    let report = run_experiment(&cfg)?;
    summarize(&cfg, &report);
    for p in write_report(&cfg, &report, &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn summarize(cfg: &ExperimentConfig, report: &Report) {
    match report {
        Report::Convergence(out) => {
            for t in &out.tables {
                println!("{}", t.label);
                println!("n\terror");
                for (n, e) in &t.rows {
                    println!("{n}\t{e:.6e}");
                }
                match t.slope() {
                    Ok(s) => println!("slope\t{s:.3}"),
                    Err(e) => println!("slope\tunavailable: {e}"),
                }
            }
        }
        Report::Slab(out) => {
            println!("t = {} after {} steps (steady: {})", out.state.t, out.state.step, out.steady);
            println!("min dT/dpsi in {:?} at theta = {}: {:.4}", cfg.slab.flat_window, cfg.slab.profile_theta, out.min_slope);
            if let Some((lo, hi)) = out.island_band {
                println!("island band psi in [{lo:.4}, {hi:.4}]");
            }
            for (level, lines) in &out.o_contours {
                if let Some((lo, hi)) = contour::x_range(lines) {
                    println!("contour T = {level:.4}: psi in [{lo:.4}, {hi:.4}]");
                }
            }
        }
        Report::Trace(sections) => {
            println!("{} field lines, {} transits each", sections.len(), cfg.trace.transits);
        }
    }
}
