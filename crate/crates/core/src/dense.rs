//! Dense assembly helpers for audits and oracles (f64, small sizes only).

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense matrix of a linear action, one unit vector per column.
pub fn assemble<T: Real>(n: usize, mut apply: impl FnMut(&[T], &mut [T])) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for k in 0..n {
        e[k] = T::one();
        apply(&e, &mut col);
        for (i, v) in col.iter().enumerate() {
            a[(i, k)] = v.to_f64_lossy();
        }
        e[k] = T::zero();
    }
    a
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min()
}

/// Row-major text dump: a `rows cols` header, then one line per row.
pub fn write_dense(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{} {}", a.nrows(), a.ncols()).map_err(io)?;
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:.17e}", a[(i, j)])).collect();
        writeln!(f, "{}", row.join(" ")).map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let perr = |line: usize, msg: &str| Error::Parse { path: path.to_path_buf(), line, msg: msg.into() };
    let mut lines = text.lines();
    let head: Vec<usize> = lines
        .next()
        .ok_or_else(|| perr(1, "empty file"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| perr(1, "bad header")))
        .collect::<Result<_>>()?;
    if head.len() != 2 {
        return Err(perr(1, "header must be `rows cols`"));
    }
    let mut a = DMatrix::zeros(head[0], head[1]);
    for i in 0..head[0] {
        let line = lines.next().ok_or_else(|| perr(i + 2, "missing row"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| perr(i + 2, "bad number")))
            .collect::<Result<_>>()?;
        if vals.len() != head[1] {
            return Err(perr(i + 2, "wrong column count"));
        }
        for (j, v) in vals.into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    Ok(a)
}
