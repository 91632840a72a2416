//! Independent reference implementations used as test oracles. None of these
//! call into the code paths they check.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// All-pairs shortest paths by Floyd-Warshall on an undirected edge list.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u32>> {
    const INF: u32 = u32::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Minimum spanning tree by enumerating all n^(n-2) Pruefer sequences.
/// Returns the sorted edge list (`lo < hi`) and its weight summed in that order.
pub fn brute_force_mst(w: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
    let n = w.len();
    let weigh = |edges: &[(usize, usize)]| edges.iter().map(|&(a, b)| w[a][b]).sum::<f64>();
    if n == 2 {
        return (vec![(0, 1)], w[0][1]);
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut best = (Vec::new(), f64::INFINITY);
    let mut seq = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % n;
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &v in &seq {
            degree[v] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &v in &seq {
            let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
            edges.push((leaf.min(v), leaf.max(v)));
            degree[leaf] -= 1;
            degree[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges.sort_unstable();
        let weight = weigh(&edges);
        if weight < best.1 {
            best = (edges, weight);
        }
    }
    best
}

/// Ranks by counting (ties get the mean of the ranks they span), then Pearson.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns
/// eigenvalues (descending) and eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Modified Gram-Schmidt on the rows of `b`; returns an orthonormal basis as
/// rows.
pub fn gram_schmidt_rows(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, m) = b.shape();
    let mut q = DMatrix::<f64>::zeros(k, m);
    for i in 0..k {
        let mut v: Vec<f64> = b.row(i).iter().copied().collect();
        for _ in 0..2 {
            for j in 0..i {
                let dot: f64 = (0..m).map(|c| v[c] * q[(j, c)]).sum();
                for c in 0..m {
                    v[c] -= dot * q[(j, c)];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in 0..m {
            q[(i, c)] = v[c] / norm;
        }
    }
    q
}

/// Principal angles from eigenvalues of `M^T M` with `M = Q1 Q2^T`, using
/// Gram-Schmidt bases and Jacobi eigenvalues (ascending angles).
pub fn oracle_principal_angles(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Vec<f64> {
    let q1 = gram_schmidt_rows(b1);
    let q2 = gram_schmidt_rows(b2);
    let m = &q1 * q2.transpose();
    let (values, _) = jacobi_eigen(&(m.transpose() * &m));
    values
        .iter()
        .map(|&c2| c2.clamp(0.0, 1.0).sqrt().acos())
        .collect()
}

/// Fraction of each point's `k` nearest neighbours sharing its label.
pub fn knn_purity(points: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let n = points.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((points.row(i) - points.row(j)).norm(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        total += d[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count() as f64 / k as f64;
    }
    total / n as f64
}
