use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embstore::require_aligned;
use crate::error::{Error, Result};
use crate::probe::{Corpus, ProbeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    DepBeforeHead,
    DepAfterHead,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::DepBeforeHead => "dep-before-head",
            Direction::DepAfterHead => "dep-after-head",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dep-before-head" => Ok(Direction::DepBeforeHead),
            "dep-after-head" => Ok(Direction::DepAfterHead),
            other => Err(Error::Format(format!("unknown direction {other:?}"))),
        }
    }
}

/// `B (h_head - h_dep)` (or the raw difference) for one dependency edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffVector {
    pub v: DVector<f64>,
    pub language: String,
    pub deprel: String,
    pub head_upos: String,
    pub dep_upos: String,
    pub direction: Direction,
    pub sentence: usize,
    /// 1-based token indices.
    pub head_idx: usize,
    pub dep_idx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelFilter {
    #[default]
    All,
    Labels(BTreeSet<String>),
    /// The `n` most frequent relations after removing `exclude`.
    TopN { n: usize, exclude: BTreeSet<String> },
}

impl LabelFilter {
    /// Top 11 relations excluding `punct`.
    pub fn top_11_without_punct() -> Self {
        LabelFilter::TopN {
            n: 11,
            exclude: BTreeSet::from(["punct".to_string()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffFilter {
    pub labels: LabelFilter,
    /// Uniform sample without replacement to at most this many vectors.
    pub sample: Option<usize>,
}

/// Relation frequencies over all non-root tokens.
pub fn relation_counts(corpora: &[Corpus<'_>]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for (tb, _) in corpora {
        for s in &tb.sentences {
            for t in s.tokens.iter().filter(|t| t.head != 0) {
                *counts.entry(t.deprel.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// The `n` most frequent relations not in `exclude` (ties alphabetical) and
/// the fraction of all dependencies they cover.
pub fn top_relations(
    counts: &BTreeMap<String, usize>,
    n: usize,
    exclude: &BTreeSet<String>,
) -> (Vec<String>, f64) {
    let total: usize = counts.values().sum();
    let mut ranked: Vec<(&String, &usize)> =
        counts.iter().filter(|(l, _)| !exclude.contains(*l)).collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(n);
    let covered: usize = ranked.iter().map(|(_, c)| **c).sum();
    let coverage = if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    };
    (ranked.into_iter().map(|(l, _)| l.clone()).collect(), coverage)
}

/// One vector per non-root token passing `filter`, in corpus order.
pub fn diff_vectors(
    probe: Option<&ProbeParams>,
    corpora: &[Corpus<'_>],
    filter: &DiffFilter,
    seed: u64,
) -> Result<Vec<DiffVector>> {
    for (tb, emb) in corpora {
        require_aligned(tb, emb)?;
        if let Some(p) = probe {
            if p.dim() != emb.dim {
                return Err(Error::Dimension(format!(
                    "probe dim {} vs embedding dim {} ({})",
                    p.dim(),
                    emb.dim,
                    tb.language
                )));
            }
        }
    }
    let keep: Option<BTreeSet<String>> = match &filter.labels {
        LabelFilter::All => None,
        LabelFilter::Labels(set) => Some(set.clone()),
        LabelFilter::TopN { n, exclude } => {
            Some(top_relations(&relation_counts(corpora), *n, exclude).0.into_iter().collect())
        }
    };

    let mut out = Vec::new();
    for (tb, emb) in corpora {
        for (ordinal, (s, e)) in tb.sentences.iter().zip(&emb.sentences).enumerate() {
            for dep in s.tokens.iter().filter(|t| t.head != 0) {
                if keep.as_ref().is_some_and(|k| !k.contains(&dep.deprel)) {
                    continue;
                }
                let head = &s.tokens[dep.head - 1];
                let raw = (e.vectors.row(head.index - 1) - e.vectors.row(dep.index - 1)).transpose();
                let v = match probe {
                    Some(p) => &p.b * raw,
                    None => raw,
                };
                out.push(DiffVector {
                    v,
                    language: tb.language.clone(),
                    deprel: dep.deprel.clone(),
                    head_upos: head.upos.clone(),
                    dep_upos: dep.upos.clone(),
                    direction: if dep.index < head.index {
                        Direction::DepBeforeHead
                    } else {
                        Direction::DepAfterHead
                    },
                    sentence: ordinal,
                    head_idx: head.index,
                    dep_idx: dep.index,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no dependencies pass the filter".into()));
    }
    if let Some(size) = filter.sample {
        if size < out.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, out.len(), size).into_vec();
            idx.sort_unstable();
            let mut slots: Vec<Option<DiffVector>> = out.into_iter().map(Some).collect();
            out = idx.into_iter().map(|i| slots[i].take().unwrap()).collect();
        }
    }
    Ok(out)
}

const META_COLUMNS: [&str; 8] = [
    "language",
    "deprel",
    "direction",
    "head_upos",
    "dep_upos",
    "sentence",
    "head_idx",
    "dep_idx",
];

/// Metadata columns followed by `v0..v{k-1}`.
pub fn vectors_tsv(vectors: &[DiffVector]) -> String {
    let k = vectors.first().map_or(0, |d| d.v.len());
    let mut out = META_COLUMNS.join("\t");
    for c in 0..k {
        let _ = write!(out, "\tv{c}");
    }
    out.push('\n');
    for d in vectors {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            d.language,
            d.deprel,
            d.direction,
            d.head_upos,
            d.dep_upos,
            d.sentence,
            d.head_idx,
            d.dep_idx
        );
        for x in d.v.iter() {
            // Shortest representation that round-trips exactly.
            let _ = write!(out, "\t{x:?}");
        }
        out.push('\n');
    }
    out
}

pub fn read_vectors_tsv(text: &str) -> Result<Vec<DiffVector>> {
    let mut lines = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty vectors file".into()))?;
    let width = header.split('\t').count();
    if width < META_COLUMNS.len() {
        return Err(Error::Format("vectors header too short".into()));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format(format!("bad integer {s:?}")))
    };
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != width {
                return Err(Error::Format(format!("row has {} of {width} columns", cols.len())));
            }
            let v: Vec<f64> = cols[META_COLUMNS.len()..]
                .iter()
                .map(|c| c.parse().map_err(|_| Error::Format(format!("bad value {c:?}"))))
                .collect::<Result<_>>()?;
            Ok(DiffVector {
                v: DVector::from_vec(v),
                language: cols[0].to_string(),
                deprel: cols[1].to_string(),
                direction: cols[2].parse()?,
                head_upos: cols[3].to_string(),
                dep_upos: cols[4].to_string(),
                sentence: num(cols[5])?,
                head_idx: num(cols[6])?,
                dep_idx: num(cols[7])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::synth_oracle_embeddings;
    use crate::synthetic::random_treebank;
    use nalgebra::DMatrix;

    #[test]
    fn one_vector_per_non_root_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tb = random_treebank("xx", 25, 1, 12, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 12, 0.1, 3).unwrap();
        let v = diff_vectors(None, &[(&tb, &emb)], &DiffFilter::default(), 0).unwrap();
        let expected: usize = tb.sentences.iter().map(|s| s.len() - 1).sum();
        assert_eq!(v.len(), expected);
    }

    #[test]
    fn identity_probe_equals_raw_and_zero_probe_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tb = random_treebank("xx", 10, 2, 8, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 8, 0.3, 3).unwrap();
        let c = [(&tb, &emb)];
        let raw = diff_vectors(None, &c, &DiffFilter::default(), 0).unwrap();
        let id = ProbeParams::new(DMatrix::identity(8, 8), 7, &[]).unwrap();
        let projected = diff_vectors(Some(&id), &c, &DiffFilter::default(), 0).unwrap();
        assert_eq!(raw, projected);
        let zero = ProbeParams::new(DMatrix::zeros(3, 8), 7, &[]).unwrap();
        let z = diff_vectors(Some(&zero), &c, &DiffFilter::default(), 0).unwrap();
        assert!(z.iter().all(|d| d.v.iter().all(|&x| x == 0.0) && d.v.len() == 3));
    }

    #[test]
    fn top_n_and_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tb = random_treebank("xx", 60, 3, 15, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 14, 0.0, 3).unwrap();
        let c = [(&tb, &emb)];
        let counts = relation_counts(&c);
        let (top, coverage) = top_relations(&counts, 3, &BTreeSet::from(["punct".into()]));
        assert_eq!(top.len(), 3);
        assert!(!top.contains(&"punct".to_string()));
        let filter = DiffFilter {
            labels: LabelFilter::TopN {
                n: 3,
                exclude: BTreeSet::from(["punct".into()]),
            },
            sample: None,
        };
        let all = diff_vectors(None, &c, &filter, 0).unwrap();
        let total: usize = counts.values().sum();
        assert!((all.len() as f64 / total as f64 - coverage).abs() < 1e-12);

        let sampled = DiffFilter {
            sample: Some(50),
            ..filter
        };
        let a = diff_vectors(None, &c, &sampled, 9).unwrap();
        let b = diff_vectors(None, &c, &sampled, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_filter_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tb = random_treebank("xx", 5, 3, 5, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 4, 0.0, 3).unwrap();
        let filter = DiffFilter {
            labels: LabelFilter::Labels(BTreeSet::from(["nonexistent".into()])),
            sample: None,
        };
        assert!(matches!(
            diff_vectors(None, &[(&tb, &emb)], &filter, 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn vectors_tsv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tb = random_treebank("xx", 5, 3, 6, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 5, 0.2, 3).unwrap();
        let v = diff_vectors(None, &[(&tb, &emb)], &DiffFilter::default(), 0).unwrap();
        assert_eq!(read_vectors_tsv(&vectors_tsv(&v)).unwrap(), v);
    }
}
