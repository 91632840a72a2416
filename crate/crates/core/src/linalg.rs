//! Dense SVD through LAPACK.
//!
//! nalgebra's bidiagonal SVD returns wrong singular values for a sizeable
//! fraction of rank-deficient inputs, and those are routine here (centered
//! data, residuals of nearly shared subspaces).

use nalgebra::DMatrix;
use ndarray::Array2;
use ndarray_linalg::SVD;

use crate::error::{Error, Result};

pub(crate) struct Svd {
    /// `n x n` left singular vectors as columns, when requested.
    pub u: Option<DMatrix<f64>>,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `d x d` right singular vectors as rows, when requested.
    pub v_t: Option<DMatrix<f64>>,
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[(i, j)])
}

pub(crate) fn svd(a: &DMatrix<f64>, want_u: bool, want_v_t: bool) -> Result<Svd> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Err(Error::Dimension(format!("SVD of an empty {r}x{c} matrix")));
    }
    let arr = Array2::from_shape_fn((r, c), |(i, j)| a[(i, j)]);
    let (u, s, v_t) = arr
        .svd(want_u, want_v_t)
        .map_err(|e| Error::Numeric(format!("SVD failed: {e}")))?;
    Ok(Svd {
        u: u.as_ref().map(to_nalgebra),
        singular_values: s.to_vec(),
        v_t: v_t.as_ref().map(to_nalgebra),
    })
}
