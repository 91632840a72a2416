use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    pub label: String,
    pub count: usize,
    pub silhouette: f64,
    /// Mean fraction of each point's k nearest neighbours sharing its label.
    pub purity: f64,
    pub centroid: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub labels: Vec<LabelStats>,
    /// Euclidean distances between label centroids, in `labels` order.
    pub centroid_distances: DMatrix<f64>,
    pub mean_silhouette: f64,
    pub mean_purity: f64,
    pub k: usize,
}

impl ClusterSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\tcount\tsilhouette\tknn_purity");
        for l in &self.labels {
            let _ = write!(out, "\tdist_{}", l.label);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{}\t{}\t{:.6}\t{:.6}", l.label, l.count, l.silhouette, l.purity);
            for j in 0..self.labels.len() {
                let _ = write!(out, "\t{:.6}", self.centroid_distances[(i, j)]);
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "ALL\t{}\t{:.6}\t{:.6}",
            self.labels.iter().map(|l| l.count).sum::<usize>(),
            self.mean_silhouette,
            self.mean_purity
        );
        out
    }
}

/// Silhouette and k-nearest-neighbour label purity (k = 10, or N - 1 when
/// fewer points exist) of labelled points given as rows of `points`.
pub fn cluster_summary(points: &DMatrix<f64>, labels: &[String]) -> Result<ClusterSummary> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} points", labels.len())));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_str()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("need at least two labels".into()));
    }
    if let Some((l, _)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::InvalidArgument(format!("label {l:?} has fewer than two points")));
    }
    let names: Vec<&str> = groups.keys().copied().collect();
    let label_id: Vec<usize> = labels
        .iter()
        .map(|l| names.binary_search(&l.as_str()).unwrap())
        .collect();
    let k = 10.min(n - 1);

    let dist = |i: usize, j: usize| (points.row(i) - points.row(j)).norm();
    let per_point: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; names.len()];
            let mut neighbours: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = dist(i, j);
                sums[label_id[j]] += d;
                neighbours.push((d, j));
            }
            let own = label_id[i];
            let a = sums[own] / (groups[names[own]].len() - 1) as f64;
            let b = (0..names.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / groups[names[c]].len() as f64)
                .fold(f64::INFINITY, f64::min);
            let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
            neighbours.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let same = neighbours[..k]
                .iter()
                .filter(|(_, j)| label_id[*j] == own)
                .count();
            (s, same as f64 / k as f64)
        })
        .collect();

    let stats: Vec<LabelStats> = names
        .iter()
        .map(|name| {
            let members = &groups[name];
            let mut centroid = DVector::zeros(points.ncols());
            for &i in members {
                centroid += points.row(i).transpose();
            }
            centroid /= members.len() as f64;
            let count = members.len() as f64;
            LabelStats {
                label: name.to_string(),
                count: members.len(),
                silhouette: members.iter().map(|&i| per_point[i].0).sum::<f64>() / count,
                purity: members.iter().map(|&i| per_point[i].1).sum::<f64>() / count,
                centroid,
            }
        })
        .collect();
    let centroid_distances = DMatrix::from_fn(stats.len(), stats.len(), |i, j| {
        (&stats[i].centroid - &stats[j].centroid).norm()
    });
    Ok(ClusterSummary {
        mean_silhouette: per_point.iter().map(|p| p.0).sum::<f64>() / n as f64,
        mean_purity: per_point.iter().map(|p| p.1).sum::<f64>() / n as f64,
        labels: stats,
        centroid_distances,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_point_masses() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0]);
        let labels: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let s = cluster_summary(&pts, &labels).unwrap();
        assert_eq!(s.k, 3);
        for l in &s.labels {
            assert_eq!(l.silhouette, 1.0);
        }
        assert!((s.centroid_distances[(0, 1)] - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_labels_rejected() {
        let pts = DMatrix::zeros(3, 2);
        let one: Vec<String> = vec!["a".into(); 3];
        assert!(cluster_summary(&pts, &one).is_err());
        let single: Vec<String> = vec!["a".into(), "a".into(), "b".into()];
        assert!(cluster_summary(&pts, &single).is_err());
    }
}
