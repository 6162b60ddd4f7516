use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maximum tolerated `|K_ij - K_ji|`, relative to `max |K|`.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-12;
/// Minimum eigenvalue must be at least `-EIGENVALUE_TOLERANCE · trace(K)`.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;

/// A train Gram matrix with its optional train×test cross kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub gram: DMatrix<f64>,
    pub cross: Option<DMatrix<f64>>,
    pub method_tag: String,
}

impl KernelMatrix {
    pub fn new(gram: DMatrix<f64>, cross: Option<DMatrix<f64>>, tag: impl Into<String>) -> Self {
        Self {
            gram,
            cross,
            method_tag: tag.into(),
        }
    }

    pub fn n_train(&self) -> usize {
        self.gram.nrows()
    }

    pub fn psd_report(&self) -> PsdReport {
        psd_report(&self.gram)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub scale: f64,
}

impl PsdReport {
    pub fn symmetric(&self) -> bool {
        self.max_asymmetry <= ASYMMETRY_TOLERANCE * self.scale
    }

    pub fn psd(&self) -> bool {
        self.min_eigenvalue >= -EIGENVALUE_TOLERANCE * self.trace.abs()
    }

    pub fn passes(&self) -> bool {
        self.symmetric() && self.psd()
    }
}

pub fn psd_report(k: &DMatrix<f64>) -> PsdReport {
    let n = k.nrows();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    let min_eigenvalue = if n == 0 {
        0.0
    } else {
        let sym = (k + k.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    };
    PsdReport {
        max_asymmetry: asym,
        min_eigenvalue,
        trace: k.trace(),
        scale: k.amax().max(f64::MIN_POSITIVE),
    }
}

/// Fills an `n×n` symmetric matrix from the upper triangle. Entries are
/// computed independently in parallel, so the result does not depend on the
/// thread count.
pub fn assemble_symmetric<F>(n: usize, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals = pairs
        .par_iter()
        .map(|&(i, j)| f(i, j))
        .collect::<Result<Vec<f64>>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

pub fn assemble_cross<F>(n: usize, m: usize, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let vals = (0..n * m)
        .into_par_iter()
        .map(|k| f(k / m, k % m))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DMatrix::from_row_slice(n, m, &vals))
}

/// Writes `method_tag,rows,cols` followed by one CSV line per row.
pub fn write_matrix(path: impl AsRef<Path>, tag: &str, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{tag},{},{}", m.nrows(), m.ncols()).map_err(io)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(String, DMatrix<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let parts: Vec<&str> = header.split(',').collect();
    if parts.len() != 3 {
        return Err(bad(1, "header must be `method_tag,rows,cols`".into()));
    }
    let rows: usize = parts[1]
        .parse()
        .map_err(|_| bad(1, "bad row count".into()))?;
    let cols: usize = parts[2]
        .parse()
        .map_err(|_| bad(1, "bad column count".into()))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(k + 2, e.to_string()))?;
        if row.len() != cols {
            return Err(bad(
                k + 2,
                format!("expected {cols} values, got {}", row.len()),
            ));
        }
        data.extend(row);
    }
    if data.len() != rows * cols {
        return Err(bad(0, format!("expected {rows} rows")));
    }
    Ok((
        parts[0].to_string(),
        DMatrix::from_row_slice(rows, cols, &data),
    ))
}
