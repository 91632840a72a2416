//! UUAS and distance-Spearman evaluation, transfer grids and edge-restricted
//! extrapolation scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embstore::{require_aligned, EmbeddingFile};
use crate::error::{Error, Result};
use crate::probe::{predicted_distances, ProbeParams};
use crate::stats::spearman;
use crate::treebank::{
    edge, gold_edges, linear_baseline_distances, tree_distances, DistanceMatrix, Edge,
    ParsedSentence, Treebank,
};

/// Minimum spanning tree of the complete graph weighted by `dist` (Prim's
/// algorithm from token 0). Among equal-weight candidate edges the one with
/// the lexicographically smallest `(min, max)` pair is chosen. Only the upper
/// triangle of `dist` is read.
pub fn mst_decode(dist: &DMatrix<f64>) -> Result<BTreeSet<Edge>> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(Error::Dimension(format!(
            "distance matrix is {}x{}",
            n,
            dist.ncols()
        )));
    }
    let w = |a: usize, b: usize| {
        let (lo, hi) = edge(a, b);
        dist[(lo, hi)]
    };
    for i in 0..n {
        for j in (i + 1)..n {
            if !dist[(i, j)].is_finite() {
                return Err(Error::Numeric(format!("non-finite distance at ({i}, {j})")));
            }
        }
    }
    let mut edges = BTreeSet::new();
    if n < 2 {
        return Ok(edges);
    }
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    // Best crossing edge per outside vertex: (weight, (lo, hi)).
    let mut best: Vec<(f64, Edge)> = (0..n).map(|v| (w(0, v), edge(0, v))).collect();
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            pick = match pick {
                Some(u) if !better(best[v], best[u]) => Some(u),
                _ => Some(v),
            };
        }
        let v = pick.expect("an outside vertex remains");
        in_tree[v] = true;
        edges.insert(best[v].1);
        for u in 0..n {
            if !in_tree[u] {
                let cand = (w(v, u), edge(v, u));
                if better(cand, best[u]) {
                    best[u] = cand;
                }
            }
        }
    }
    Ok(edges)
}

#[inline]
fn better(a: (f64, Edge), b: (f64, Edge)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// `(correct, scored)`: scored gold edges have no PUNCT endpoint.
pub fn uuas(pred_edges: &BTreeSet<Edge>, s: &ParsedSentence) -> (usize, usize) {
    let scored: Vec<Edge> = gold_edges(s)
        .into_iter()
        .filter(|&(a, b)| !s.tokens[a].is_punct() && !s.tokens[b].is_punct())
        .collect();
    let correct = scored.iter().filter(|e| pred_edges.contains(e)).count();
    (correct, scored.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DsprMode {
    /// Correlate row `i` of predicted and gold distances for each token, then
    /// average over tokens.
    #[default]
    PerWord,
    /// One correlation over all unordered token pairs of the sentence.
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceDspr {
    pub score: f64,
    /// Rows whose gold or predicted distances were all tied (scored as 0).
    pub flagged_rows: usize,
}

/// Spearman agreement between predicted and gold distances of one sentence.
pub fn sentence_dspr(pred: &DMatrix<f64>, gold: &DistanceMatrix, mode: DsprMode) -> SentenceDspr {
    let n = gold.n();
    match mode {
        DsprMode::PerWord => {
            let mut total = 0.0;
            let mut flagged = 0;
            let mut p = Vec::with_capacity(n);
            let mut g = Vec::with_capacity(n);
            for i in 0..n {
                p.clear();
                g.clear();
                for j in (0..n).filter(|&j| j != i) {
                    p.push(pred[(i, j)]);
                    g.push(f64::from(gold.get(i, j)));
                }
                match spearman(&p, &g) {
                    Some(r) => total += r,
                    None => flagged += 1,
                }
            }
            SentenceDspr {
                score: if n == 0 { 0.0 } else { total / n as f64 },
                flagged_rows: flagged,
            }
        }
        DsprMode::PerPair => {
            let mut p = Vec::new();
            let mut g = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    p.push(pred[(i, j)]);
                    g.push(f64::from(gold.get(i, j)));
                }
            }
            match spearman(&p, &g) {
                Some(r) => SentenceDspr {
                    score: r,
                    flagged_rows: 0,
                },
                None => SentenceDspr {
                    score: 0.0,
                    flagged_rows: 1,
                },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub dspr_mode: DsprMode,
    /// Inclusive sentence-length range for DSpr.
    pub length_bounds: (usize, usize),
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            dspr_mode: DsprMode::PerWord,
            length_bounds: (5, 50),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `correct_edges / scored_edges`; `None` if nothing was scored.
    pub uuas: Option<f64>,
    /// Mean over sentence lengths of the mean sentence score at that length.
    pub dspr: Option<f64>,
    pub sentence_count: usize,
    pub correct_edges: usize,
    pub scored_edges: usize,
    /// length -> (sentences, mean sentence DSpr)
    pub per_length: BTreeMap<usize, (usize, f64)>,
    pub flagged_rows: usize,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "uuas\t{}", fmt_opt(self.uuas));
        let _ = writeln!(out, "dspr\t{}", fmt_opt(self.dspr));
        let _ = writeln!(out, "sentences\t{}", self.sentence_count);
        let _ = writeln!(out, "edges\t{}/{}", self.correct_edges, self.scored_edges);
        let _ = writeln!(out, "flagged_rows\t{}", self.flagged_rows);
        for (len, (count, mean)) in &self.per_length {
            let _ = writeln!(out, "dspr_len\t{len}\t{count}\t{mean:.6}");
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

struct SentenceScore {
    correct: usize,
    scored: usize,
    dspr: Option<(usize, SentenceDspr)>,
}

/// Scores arbitrary predicted distances: `predict(ordinal, sentence)` returns
/// an `n x n` matrix for each sentence with at least two tokens.
pub fn evaluate_predictions<F>(t: &Treebank, opts: &EvalOptions, predict: F) -> Result<EvalReport>
where
    F: Fn(usize, &ParsedSentence) -> Result<DMatrix<f64>> + Sync,
{
    let scores: Vec<SentenceScore> = t
        .sentences
        .par_iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(ordinal, s)| {
            let pred = predict(ordinal, s)?;
            let (correct, scored) = uuas(&mst_decode(&pred)?, s);
            let n = s.len();
            let dspr = (opts.length_bounds.0 <= n && n <= opts.length_bounds.1)
                .then(|| (n, sentence_dspr(&pred, &tree_distances(s), opts.dspr_mode)));
            Ok(SentenceScore {
                correct,
                scored,
                dspr,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = EvalReport {
        uuas: None,
        dspr: None,
        sentence_count: scores.len(),
        correct_edges: 0,
        scored_edges: 0,
        per_length: BTreeMap::new(),
        flagged_rows: 0,
    };
    let mut by_len: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for s in &scores {
        report.correct_edges += s.correct;
        report.scored_edges += s.scored;
        if let Some((n, d)) = s.dspr {
            let slot = by_len.entry(n).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += d.score;
            report.flagged_rows += d.flagged_rows;
        }
    }
    if report.scored_edges > 0 {
        report.uuas = Some(report.correct_edges as f64 / report.scored_edges as f64);
    }
    for (n, (count, sum)) in by_len {
        report.per_length.insert(n, (count, sum / count as f64));
    }
    if !report.per_length.is_empty() {
        let total: f64 = report.per_length.values().map(|(_, m)| m).sum();
        report.dspr = Some(total / report.per_length.len() as f64);
    }
    Ok(report)
}

fn check_probe(p: &ProbeParams, e: &EmbeddingFile) -> Result<()> {
    if p.dim() != e.dim {
        return Err(Error::Dimension(format!(
            "probe dim {} vs embedding dim {}",
            p.dim(),
            e.dim
        )));
    }
    Ok(())
}

pub fn evaluate(p: &ProbeParams, t: &Treebank, e: &EmbeddingFile) -> Result<EvalReport> {
    evaluate_with(p, t, e, &EvalOptions::default())
}

pub fn evaluate_with(
    p: &ProbeParams,
    t: &Treebank,
    e: &EmbeddingFile,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    require_aligned(t, e)?;
    check_probe(p, e)?;
    evaluate_predictions(t, opts, |ordinal, _| {
        predicted_distances(&p.b, &e.sentences[ordinal].vectors)
    })
}

/// Scores the left-to-right chain analysis.
pub fn evaluate_linear_baseline(t: &Treebank, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_predictions(t, opts, |_, s| {
        let d = linear_baseline_distances(s.len());
        Ok(DMatrix::from_row_slice(s.len(), s.len(), &d.to_f64()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjectiveOrder {
    /// Dependent precedes its head.
    Prenominal,
    /// Dependent follows its head.
    Postnominal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationScore {
    pub correct: usize,
    pub scored: usize,
}

impl ExtrapolationScore {
    /// `None` when no edge of the requested kind exists.
    pub fn ratio(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.correct as f64 / self.scored as f64)
    }
}

/// UUAS restricted to gold edges labelled `relation` whose dependent lies on
/// the given side of its head; predictions still come from the full MST.
pub fn extrapolation_uuas(
    p: &ProbeParams,
    t: &Treebank,
    e: &EmbeddingFile,
    relation: &str,
    order: AdjectiveOrder,
) -> Result<ExtrapolationScore> {
    require_aligned(t, e)?;
    check_probe(p, e)?;
    let parts: Vec<(usize, usize)> = t
        .sentences
        .par_iter()
        .zip(&e.sentences)
        .filter(|(s, _)| s.len() >= 2)
        .map(|(s, es)| {
            let targets: Vec<Edge> = s
                .tokens
                .iter()
                .filter(|tok| tok.head != 0 && tok.deprel == relation)
                .filter(|tok| match order {
                    AdjectiveOrder::Prenominal => tok.index < tok.head,
                    AdjectiveOrder::Postnominal => tok.index > tok.head,
                })
                .map(|tok| edge(tok.index - 1, tok.head - 1))
                .collect();
            if targets.is_empty() {
                return Ok((0, 0));
            }
            let pred = mst_decode(&predicted_distances(&p.b, &es.vectors)?)?;
            let correct = targets.iter().filter(|e| pred.contains(e)).count();
            Ok((correct, targets.len()))
        })
        .collect::<Result<_>>()?;
    let (correct, scored) = parts
        .iter()
        .fold((0, 0), |(c, s), (c2, s2)| (c + c2, s + s2));
    Ok(ExtrapolationScore { correct, scored })
}

pub const EXTRA_COLUMNS: [&str; 4] = ["linear", "rand", "holdout", "all"];

/// Inputs for a transfer grid. Missing entries become absent cells.
#[derive(Debug, Default)]
pub struct TransferInputs {
    /// Evaluation data per target language.
    pub targets: BTreeMap<String, (Treebank, EmbeddingFile)>,
    /// Single-language probes per source language.
    pub sources: BTreeMap<String, ProbeParams>,
    /// Probe trained on every language except the key.
    pub holdout: BTreeMap<String, ProbeParams>,
    /// Probe trained on all languages jointly.
    pub all: Option<ProbeParams>,
    /// Randomly initialised model baseline: in-language probe and its embeddings.
    pub rand: BTreeMap<String, (ProbeParams, EmbeddingFile)>,
}

/// Rows are targets, columns are sources (alphabetical) followed by
/// `linear`, `rand`, `holdout` and `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub languages: Vec<String>,
    pub columns: Vec<String>,
    pub uuas: Vec<Vec<Option<f64>>>,
    pub dspr: Vec<Vec<Option<f64>>>,
    /// `(target, column, reason)` for cells that failed to evaluate.
    pub failures: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Uuas,
    Dspr,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Uuas => "uuas",
            Metric::Dspr => "dspr",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uuas" => Ok(Metric::Uuas),
            "dspr" => Ok(Metric::Dspr),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

impl TransferMatrix {
    pub fn table(&self, metric: Metric) -> &Vec<Vec<Option<f64>>> {
        match metric {
            Metric::Uuas => &self.uuas,
            Metric::Dspr => &self.dspr,
        }
    }

    pub fn source_count(&self) -> usize {
        self.columns.len() - EXTRA_COLUMNS.len()
    }

    pub fn cell(&self, metric: Metric, target: &str, column: &str) -> Option<f64> {
        let r = self.languages.iter().position(|l| l == target)?;
        let c = self.columns.iter().position(|l| l == column)?;
        self.table(metric)[r][c]
    }

    /// Best off-diagonal source for each target: `(source, score)`.
    pub fn single_tran(&self, metric: Metric) -> Vec<Option<(String, f64)>> {
        let table = self.table(metric);
        self.languages
            .iter()
            .enumerate()
            .map(|(r, target)| {
                let mut best: Option<(String, f64)> = None;
                let sources = self.columns.iter().zip(&table[r]).take(self.source_count());
                for (source, cell) in sources {
                    if source == target {
                        continue;
                    }
                    if let Some(v) = *cell {
                        if best.as_ref().is_none_or(|(_, b)| v > *b) {
                            best = Some((source.clone(), v));
                        }
                    }
                }
                best
            })
            .collect()
    }

    pub fn to_tsv(&self, metric: Metric) -> String {
        let mut out = String::from("tgt\\src");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (lang, row) in self.languages.iter().zip(self.table(metric)) {
            out.push_str(lang);
            for v in row {
                out.push('\t');
                out.push_str(&fmt_opt(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses one metric table written by [`TransferMatrix::to_tsv`]; lines
    /// starting with `#` are ignored. The other metric is left absent.
    pub fn from_tsv(text: &str, metric: Metric) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty transfer table".into()))?;
        let columns: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
        if columns.len() < EXTRA_COLUMNS.len() {
            return Err(Error::Format("transfer table has too few columns".into()));
        }
        let mut languages = Vec::new();
        let mut table = Vec::new();
        for line in lines {
            let mut cells = line.split('\t');
            languages.push(cells.next().unwrap_or_default().to_string());
            let row: Vec<Option<f64>> = cells
                .map(|c| {
                    if c == "NA" {
                        Ok(None)
                    } else {
                        c.parse()
                            .map(Some)
                            .map_err(|_| Error::Format(format!("bad cell {c:?}")))
                    }
                })
                .collect::<Result<_>>()?;
            if row.len() != columns.len() {
                return Err(Error::Format(format!("row {line:?} has wrong width")));
            }
            table.push(row);
        }
        let absent = vec![vec![None; columns.len()]; languages.len()];
        let (uuas, dspr) = match metric {
            Metric::Uuas => (table, absent),
            Metric::Dspr => (absent, table),
        };
        Ok(TransferMatrix {
            languages,
            columns,
            uuas,
            dspr,
            failures: Vec::new(),
        })
    }
}

/// Evaluates every (target, column) cell. Cells without inputs, or whose
/// evaluation fails, are absent; failures are recorded, not raised.
pub fn transfer_grid(inputs: &TransferInputs, opts: &EvalOptions) -> TransferMatrix {
    let languages: Vec<String> = inputs.targets.keys().cloned().collect();
    let mut columns: Vec<String> = inputs.sources.keys().cloned().collect();
    columns.extend(EXTRA_COLUMNS.iter().map(|s| s.to_string()));

    let cells: Vec<(usize, usize)> = (0..languages.len())
        .flat_map(|r| (0..columns.len()).map(move |c| (r, c)))
        .collect();
    let results: Vec<Option<std::result::Result<EvalReport, String>>> = cells
        .par_iter()
        .map(|&(r, c)| {
            let target = &languages[r];
            let (tb, emb) = &inputs.targets[target];
            let outcome = match columns[c].as_str() {
                src if c < inputs.sources.len() => {
                    Some(evaluate_with(&inputs.sources[src], tb, emb, opts))
                }
                "linear" => Some(evaluate_linear_baseline(tb, opts)),
                "rand" => inputs
                    .rand
                    .get(target)
                    .map(|(p, remb)| evaluate_with(p, tb, remb, opts)),
                "holdout" => inputs
                    .holdout
                    .get(target)
                    .map(|p| evaluate_with(p, tb, emb, opts)),
                "all" => inputs.all.as_ref().map(|p| evaluate_with(p, tb, emb, opts)),
                _ => unreachable!(),
            };
            outcome.map(|r| r.map_err(|e| e.to_string()))
        })
        .collect();

    let mut uuas = vec![vec![None; columns.len()]; languages.len()];
    let mut dspr = vec![vec![None; columns.len()]; languages.len()];
    let mut failures = Vec::new();
    for (&(r, c), res) in cells.iter().zip(results) {
        match res {
            Some(Ok(report)) => {
                uuas[r][c] = report.uuas;
                dspr[r][c] = report.dspr;
            }
            Some(Err(msg)) => failures.push((languages[r].clone(), columns[c].clone(), msg)),
            None => {}
        }
    }
    TransferMatrix {
        languages,
        columns,
        uuas,
        dspr,
        failures,
    }
}
