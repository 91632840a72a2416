//! Principal angles between probe row spaces and their relation to transfer
//! performance.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{fmt_opt, Metric, TransferMatrix};
use crate::linalg::svd;
use crate::probe::ProbeParams;
use crate::stats::spearman;

/// Orthonormal basis (as columns, `m x k`) of the row space of `b`.
fn row_space_basis(b: &DMatrix<f64>, which: &'static str) -> Result<DMatrix<f64>> {
    let (k, m) = b.shape();
    let dec = svd(&b.transpose(), true, false)?;
    let u = dec.u.expect("requested U");
    let sigma = &dec.singular_values;
    let max = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = (m.max(k) as f64) * f64::EPSILON * max;
    let mut idx: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > tol).collect();
    if idx.len() < k || max == 0.0 {
        return Err(Error::RankDeficient {
            which,
            rank: if max == 0.0 { 0 } else { idx.len() },
            expected: k,
        });
    }
    idx.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    Ok(DMatrix::from_fn(m, k, |r, c| u[(r, idx[c])]))
}

fn sorted_singular_values(a: DMatrix<f64>) -> Result<Vec<f64>> {
    let mut s = svd(&a, false, false)?.singular_values;
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Principal angles (radians, ascending) between the row spaces of two
/// `k x m` matrices. Small angles come from the sines of the residual
/// `Q2 - Q1 Q1^T Q2`, large ones from the cosines `svd(Q1^T Q2)`, which keeps
/// both ends accurate.
pub fn principal_angles(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<Vec<f64>> {
    if b1.shape() != b2.shape() {
        return Err(Error::Dimension(format!(
            "probe shapes {:?} and {:?} differ",
            b1.shape(),
            b2.shape()
        )));
    }
    let (k, m) = b1.shape();
    if k > m || k == 0 {
        return Err(Error::Dimension(format!("need 0 < k <= m, got k={k}, m={m}")));
    }
    let q1 = row_space_basis(b1, "first")?;
    let q2 = row_space_basis(b2, "second")?;
    let cross = q1.transpose() * &q2;
    let residual = &q2 - &q1 * &cross;

    let mut cosines = sorted_singular_values(cross)?;
    cosines.reverse();
    let sines = sorted_singular_values(residual)?;
    Ok(cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            if c * c >= 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.clamp(0.0, 1.0).acos()
            }
        })
        .collect())
}

pub fn mean_principal_angle(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<f64> {
    let angles = principal_angles(b1, b2)?;
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleMatrix {
    pub languages: Vec<String>,
    /// Symmetric, zero diagonal, entries in `[0, pi/2]`.
    pub theta: DMatrix<f64>,
}

impl AngleMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.languages.iter().position(|l| l == a)?;
        let j = self.languages.iter().position(|l| l == b)?;
        Some(self.theta[(i, j)])
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for l in &self.languages {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.languages.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.languages.len() {
                let _ = write!(out, "\t{:.6}", self.theta[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise mean principal angles between per-language probes.
pub fn mean_angle_matrix(probes: &[(String, ProbeParams)]) -> Result<AngleMatrix> {
    if let Some((_, first)) = probes.first() {
        for (lang, p) in probes {
            if p.b.shape() != first.b.shape() {
                return Err(Error::Dimension(format!(
                    "probe for {lang} is {:?}, expected {:?}",
                    p.b.shape(),
                    first.b.shape()
                )));
            }
        }
    }
    let n = probes.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| mean_principal_angle(&probes[i].1.b, &probes[j].1.b))
        .collect::<Result<_>>()?;
    let mut theta = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    }
    Ok(AngleMatrix {
        languages: probes.iter().map(|(l, _)| l.clone()).collect(),
        theta,
    })
}

/// For each target language, Spearman correlation between the ordering of
/// sources by transfer performance and by (negated) subspace angle. Targets
/// with fewer than three scored sources are absent.
pub fn ordering_correlation(
    angles: &AngleMatrix,
    transfer: &TransferMatrix,
    metric: Metric,
) -> Vec<(String, Option<f64>)> {
    angles
        .languages
        .iter()
        .map(|target| {
            let mut perf = Vec::new();
            let mut neg_angle = Vec::new();
            for source in &angles.languages {
                if source == target {
                    continue;
                }
                if let (Some(p), Some(a)) = (
                    transfer.cell(metric, target, source),
                    angles.get(target, source),
                ) {
                    perf.push(p);
                    neg_angle.push(-a);
                }
            }
            let rho = if perf.len() < 3 {
                None
            } else {
                spearman(&perf, &neg_angle)
            };
            (target.clone(), rho)
        })
        .collect()
}

pub fn ordering_correlation_tsv(rows: &[(String, Option<f64>)], metric: Metric) -> String {
    let mut out = format!("language\tspearman_{}\n", metric.as_str());
    for (l, v) in rows {
        let _ = writeln!(out, "{l}\t{}", fmt_opt(*v));
    }
    out
}
