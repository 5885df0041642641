//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for numerical rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Orthonormal basis (as columns) of `{v : m v = 0}` from a full SVD.
pub fn nullspace(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns all n right singular vectors.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let cutoff = RANK_CUTOFF * smax;
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= cutoff)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    svd.solve(b, 1e-13 * smax)
        .map_err(|e| Error::SingularSystem(e.to_string()))
}

/// `max |m_ij|`, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Numerically stable `ln Σ_j w_j e^{v_j}` over entries with `w_j > 0`.
/// Returns `None` when every weight is zero.
pub fn log_sum_exp_weighted<'a>(pairs: impl Iterator<Item = (f64, f64)> + Clone + 'a) -> Option<f64> {
    let m = pairs
        .clone()
        .filter(|(w, _)| *w > 0.0)
        .map(|(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let s: f64 = pairs
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, v)| w * (v - m).exp())
        .sum();
    Some(m + s.ln())
}
