//! Exact t-SNE.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMethod {
    Tsne,
    Pca,
}

impl ReductionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReductionMethod::Tsne => "tsne",
            ReductionMethod::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub seed: u64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations with exaggerated `P` and the initial momentum.
    pub exploration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub init_sigma: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            seed: 0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exploration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_sigma: 1e-4,
        }
    }
}

impl TsneParams {
    pub fn with_perplexity(perplexity: f64, seed: u64) -> Self {
        TsneParams {
            perplexity,
            seed,
            ..TsneParams::default()
        }
    }
}

/// Per-point conditional distributions `p_{j|i}` (row `i`, zero diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub p: DMatrix<f64>,
    /// Gaussian precision `1 / (2 sigma_i^2)` per point.
    pub betas: Vec<f64>,
    /// Perplexity `exp(H(P_i))` reached by the search, per point.
    pub perplexities: Vec<f64>,
}

fn sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.row(i) - x.row(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Row distribution and its entropy (nats) for precision `beta`; distances
/// are shifted by their minimum, which leaves the normalized row unchanged.
fn row_entropy(dists: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (o, &d) in out.iter_mut().zip(dists) {
        *o = (-(d - min) * beta).exp();
        sum += *o;
    }
    let mut weighted = 0.0;
    for (o, &d) in out.iter_mut().zip(dists) {
        *o /= sum;
        weighted += (d - min) * *o;
    }
    sum.ln() + beta * weighted
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    let upper = (n as f64 - 1.0) / 3.0;
    if !(perplexity > 1.0 && perplexity < upper) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} outside (1, {upper:.3}) for {n} points"
        )));
    }
    Ok(())
}

/// Binary search of each point's Gaussian bandwidth so that the entropy of
/// `p_{.|i}` equals `log(perplexity)` within 1e-5 (at most 50 steps).
pub fn conditional_probabilities(x: &DMatrix<f64>, perplexity: f64) -> Result<Conditional> {
    let n = x.nrows();
    check_perplexity(n, perplexity)?;
    let d = sq_distances(x);
    let target = perplexity.ln();

    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
            let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
            let mut row = vec![0.0; dists.len()];
            let mut h = row_entropy(&dists, beta, &mut row);
            for _ in 0..MAX_BISECTIONS {
                let diff = h - target;
                if diff.abs() < ENTROPY_TOL {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = row_entropy(&dists, beta, &mut row);
            }
            (row, beta, h.exp())
        })
        .collect();

    let mut p = DMatrix::zeros(n, n);
    let mut betas = Vec::with_capacity(n);
    let mut perplexities = Vec::with_capacity(n);
    for (i, (row, beta, perp)) in rows.into_iter().enumerate() {
        for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
            p[(i, j)] = row[slot];
        }
        betas.push(beta);
        perplexities.push(perp);
    }
    Ok(Conditional {
        p,
        betas,
        perplexities,
    })
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2N`.
pub fn joint_probabilities(x: &DMatrix<f64>, perplexity: f64) -> Result<DMatrix<f64>> {
    let cond = conditional_probabilities(x, perplexity)?;
    let n = x.nrows() as f64;
    Ok((&cond.p + cond.p.transpose()) / (2.0 * n))
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|^2)` and their normalization
/// `Q`. Row sums are added in index order.
pub fn low_dim_affinities(y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = y.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[(i, 0)] - y[(j, 0)];
                        let dy = y[(i, 1)] - y[(j, 1)];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let total: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    let num = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let q = &num / total;
    (num, q)
}

pub fn kl_divergence(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv.max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// Per-iteration diagnostics (before the update of that iteration).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TsneTrace {
    pub kl: Vec<f64>,
    pub q_sum: Vec<f64>,
    pub p_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// `N x 2`.
    pub points: DMatrix<f64>,
    pub method: ReductionMethod,
    pub perplexity: Option<f64>,
    pub seed: u64,
    pub iterations: usize,
}

/// Exact O(N^2) t-SNE with early exaggeration, momentum and per-coordinate
/// adaptive gains.
pub fn tsne(x: &DMatrix<f64>, params: &TsneParams) -> Result<(Projection2D, TsneTrace)> {
    let n = x.nrows();
    if n > 20_000 {
        return Err(Error::InvalidArgument(format!(
            "{n} points exceeds the exact t-SNE limit of 20000"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite t-SNE input".into()));
    }
    let p = joint_probabilities(x, params.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Normal::new(0.0, params.init_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut y = DMatrix::from_fn(n, 2, |_, _| init.sample(&mut rng));
    let mut velocity = DMatrix::<f64>::zeros(n, 2);
    let mut gains = DMatrix::<f64>::from_element(n, 2, 1.0);
    let mut trace = TsneTrace {
        p_sum: p.sum(),
        ..TsneTrace::default()
    };

    for iter in 0..params.iterations {
        let exploring = iter < params.exploration_iterations;
        let exaggeration = if exploring { params.early_exaggeration } else { 1.0 };
        let momentum = if exploring {
            params.initial_momentum
        } else {
            params.final_momentum
        };

        let (num, q) = low_dim_affinities(&y);
        trace.kl.push(kl_divergence(&p, &q));
        trace.q_sum.push(q.sum());

        let grad_rows: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = (exaggeration * p[(i, j)] - q[(i, j)]) * num[(i, j)];
                    g[0] += w * (y[(i, 0)] - y[(j, 0)]);
                    g[1] += w * (y[(i, 1)] - y[(j, 1)]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for (i, g) in grad_rows.iter().enumerate() {
            for c in 0..2 {
                let same_sign = (g[c] > 0.0) == (velocity[(i, c)] > 0.0);
                let gain = &mut gains[(i, c)];
                *gain = if same_sign { *gain * 0.8 } else { *gain + 0.2 };
                *gain = gain.max(0.01);
                velocity[(i, c)] = momentum * velocity[(i, c)] - params.learning_rate * *gain * g[c];
                y[(i, c)] += velocity[(i, c)];
            }
        }
        let mean = y.row_mean();
        for mut row in y.row_iter_mut() {
            row -= &mean;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("t-SNE diverged at iteration {iter}")));
        }
    }

    Ok((
        Projection2D {
            points: y,
            method: ReductionMethod::Tsne,
            perplexity: Some(params.perplexity),
            seed: params.seed,
            iterations: params.iterations,
        },
        trace,
    ))
}
