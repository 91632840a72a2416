use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::svd;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `N x c` scores.
    pub projected: DMatrix<f64>,
    /// Variance along each component (`sigma^2 / (N - 1)`), decreasing.
    pub explained_variance: Vec<f64>,
    /// `c x d`; row `i` is the `i`-th principal direction.
    pub components: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl PcaResult {
    /// Maps scores back to the input space.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = &self.projected * &self.components;
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

/// Principal components of the rows of `x` via SVD of the centered data.
/// Each component is signed so that its largest-magnitude loading is positive.
pub fn pca(x: &DMatrix<f64>, components: usize) -> Result<PcaResult> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {n}")));
    }
    if components == 0 || components > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "{components} components requested for a {n}x{d} input (max {})",
            (n - 1).min(d)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite PCA input".into()));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let dec = svd(&centered, false, true)?;
    let v_t = dec.v_t.expect("requested V^T");
    let sigma = dec.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut comps = DMatrix::zeros(components, d);
    for (r, &i) in order.iter().take(components).enumerate() {
        let mut row = v_t.row(i).into_owned();
        let mut pivot = 0;
        for j in 1..d {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row = -row;
        }
        comps.set_row(r, &row);
    }
    let explained_variance = order
        .iter()
        .take(components)
        .map(|&i| sigma[i] * sigma[i] / (n - 1) as f64)
        .collect();
    Ok(PcaResult {
        projected: centered * comps.transpose(),
        explained_variance,
        components: comps,
        mean,
    })
}
