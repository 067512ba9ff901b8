use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Errors of one configuration over a resolution sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub label: String,
    pub order: usize,
    pub kappa_perp: f64,
    /// `(n, error)` in increasing `n`.
    pub rows: Vec<(usize, f64)>,
}

impl ConvergenceTable {
    pub fn slope(&self) -> Result<f64> {
        fit_slope(&self.rows)
    }

    /// True unless an error grows under refinement, except possibly between
    /// the two coarsest rows.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).enumerate().all(|(k, w)| k == 0 || w[1].1 <= w[0].1)
    }
}

/// Least-squares slope of `log(error)` against `log(n)`, negated.
pub fn fit_slope(rows: &[(usize, f64)]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::InvalidParameter(format!("slope needs at least 2 rows, got {}", rows.len())));
    }
    if let Some(&(n, e)) = rows.iter().find(|&&(n, e)| !(e > 0.0 && e.is_finite()) || n == 0) {
        return Err(Error::InvalidParameter(format!("cannot fit slope through n = {n}, error = {e}")));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope needs distinct resolutions".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(-sxy / sxx)
}

/// Writes `header` as `# ` lines, then `n<TAB>error` rows with errors in
/// `%.12e` form.
pub fn write_table(table: &ConvergenceTable, header: &[String], path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for h in header {
        writeln!(f, "# {h}").map_err(io)?;
    }
    writeln!(f, "# label = {}", table.label).map_err(io)?;
    writeln!(f, "# order = {}", table.order).map_err(io)?;
    writeln!(f, "# kappa_perp = {:e}", table.kappa_perp).map_err(io)?;
    if let Ok(s) = table.slope() {
        writeln!(f, "# slope = {s:.6}").map_err(io)?;
    }
    writeln!(f, "n\terror").map_err(io)?;
    for &(n, e) in &table.rows {
        writeln!(f, "{n}\t{e:.12e}").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn parse_table(path: &Path) -> Result<ConvergenceTable> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut t = ConvergenceTable { label: String::new(), order: 0, kappa_perp: f64::NAN, rows: Vec::new() };
    for (ln, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let lineno = ln + 1;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "label" => t.label = v.to_string(),
                    "order" => t.order = v.parse().map_err(|_| perr(lineno, format!("bad order {v}")))?,
                    "kappa_perp" => t.kappa_perp = v.parse().map_err(|_| perr(lineno, format!("bad kappa {v}")))?,
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with("n\t") {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(n), Some(e), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(perr(lineno, "expected two tab-separated columns".into()));
        };
        let n = n.parse().map_err(|_| perr(lineno, format!("bad resolution {n}")))?;
        let e = e.parse().map_err(|_| perr(lineno, format!("bad error {e}")))?;
        t.rows.push((n, e));
    }
    Ok(t)
}
