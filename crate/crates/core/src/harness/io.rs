//! Tab-separated dumps. Reals are written with `{:.12e}`, which never
//! depends on the locale.

use std::io::Write;
use std::path::Path;

use super::contour::Polyline;
use crate::error::{check_len, Error, Result};
use crate::grid::Grid2D;
use crate::solver::SolverState;

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn write_all(path: &Path, header: &[String], columns: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = create(path)?;
    for h in header {
        writeln!(f, "# {h}").map_err(io)?;
    }
    writeln!(f, "{columns}").map_err(io)?;
    body(&mut f).map_err(io)?;
    f.flush().map_err(io)
}

/// `x<TAB>y<TAB>u` rows in flattened order (x outer, y inner).
pub fn write_field(u: &[f64], grid: &Grid2D<f64>, header: &[String], path: &Path) -> Result<()> {
    check_len(grid.len(), u.len())?;
    write_all(path, header, "x\ty\tu", |f| {
        for (k, v) in u.iter().enumerate() {
            let (x, y) = grid.coords(k);
            writeln!(f, "{x:.12e}\t{y:.12e}\t{v:.12e}")?;
        }
        Ok(())
    })
}

/// `step<TAB>t<TAB>h_norm<TAB>cg_iters<TAB>cg_residual`.
pub fn write_diagnostics(state: &SolverState<f64>, header: &[String], path: &Path) -> Result<()> {
    write_all(path, header, "step\tt\th_norm\tcg_iters\tcg_residual", |f| {
        for d in &state.diagnostics {
            writeln!(f, "{}\t{:.12e}\t{:.12e}\t{}\t{:.6e}", d.step, d.t, d.h_norm, d.cg_iters, d.cg_residual)?;
        }
        Ok(())
    })
}

/// `seed<TAB>transit<TAB>x<TAB>y`.
pub fn write_poincare(sections: &[Vec<(f64, f64)>], header: &[String], path: &Path) -> Result<()> {
    write_all(path, header, "seed\ttransit\tx\ty", |f| {
        for (s, pts) in sections.iter().enumerate() {
            for (k, (x, y)) in pts.iter().enumerate() {
                writeln!(f, "{s}\t{}\t{x:.12e}\t{y:.12e}", k + 1)?;
            }
        }
        Ok(())
    })
}

/// Comma-separated `level,line,x,y`.
pub fn write_contours(contours: &[(f64, Vec<Polyline>)], header: &[String], path: &Path) -> Result<()> {
    write_all(path, header, "level,line,x,y", |f| {
        for (level, lines) in contours {
            for (l, line) in lines.iter().enumerate() {
                for (x, y) in line {
                    writeln!(f, "{level:.12e},{l},{x:.12e},{y:.12e}")?;
                }
            }
        }
        Ok(())
    })
}
