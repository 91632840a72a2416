//! CoNLL-U treebanks and gold tree structure.
//!
//! Token positions inside matrices and edge sets are 0-based (`position =
//! token.index - 1`); the 1-based `index` and `head` fields mirror the file.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// An undirected edge between two 0-based token positions, stored `(lo, hi)`.
pub type Edge = (usize, usize);

/// Normalizes an unordered pair to `(min, max)`.
#[inline]
pub fn edge(a: usize, b: usize) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    /// 1-based head position, 0 for the root.
    pub head: usize,
    /// Universal relation label; subtypes are stripped on load.
    pub deprel: String,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
}

impl ParsedSentence {
    /// Builds a sentence from a head vector (1-based heads, 0 = root),
    /// filling forms and labels with placeholders. Validates the tree.
    pub fn from_heads(sentence_id: impl Into<String>, heads: &[usize]) -> Result<Self> {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &head)| Token {
                index: i + 1,
                form: format!("w{}", i + 1),
                upos: "X".to_string(),
                head,
                deprel: if head == 0 { "root" } else { "dep" }.to_string(),
            })
            .collect();
        let sentence = ParsedSentence {
            sentence_id: sentence_id.into(),
            tokens,
        };
        sentence.validate()?;
        Ok(sentence)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Checks index numbering and that head pointers form a single rooted tree.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let fail = |message: String| {
            Err(Error::Structure {
                sentence_id: self.sentence_id.clone(),
                message,
            })
        };
        if n == 0 {
            return fail("sentence has no tokens".into());
        }
        let mut roots = 0;
        for (pos, tok) in self.tokens.iter().enumerate() {
            if tok.index != pos + 1 {
                return fail(format!(
                    "token at position {} has index {}",
                    pos + 1,
                    tok.index
                ));
            }
            if tok.head > n {
                return fail(format!("token {} has head {} > {}", tok.index, tok.head, n));
            }
            if tok.head == tok.index {
                return fail(format!("token {} is its own head", tok.index));
            }
            if tok.head == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            return fail(format!("expected exactly one root, found {roots}"));
        }
        // Every chain of head pointers must reach the root within n steps.
        for tok in &self.tokens {
            let mut cur = tok.index;
            let mut steps = 0;
            while cur != 0 {
                cur = self.tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    return fail(format!("cycle through token {}", tok.index));
                }
            }
        }
        Ok(())
    }
}

/// All-pairs path lengths (in edges) of a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Builds a matrix from row-major entries; used by tests and oracles.
    pub fn from_rows(n: usize, d: Vec<u32>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} entries for a {n}x{n} distance matrix",
                d.len()
            )));
        }
        Ok(DistanceMatrix { n, d })
    }

    /// Entries as `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&x| f64::from(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Treebank {
    pub language: String,
    pub sentences: Vec<ParsedSentence>,
}

impl Treebank {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Loads a CoNLL-U file. Multiword-token ranges and empty nodes are dropped,
/// relation subtypes are stripped, and every sentence must form a tree.
pub fn load_conllu(path: impl AsRef<Path>, language: &str) -> Result<Treebank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_conllu(text.as_bytes(), &name, language)
}

/// Parses CoNLL-U from any buffered reader; `file_label` is used in error
/// messages and synthesized sentence ids.
pub fn parse_conllu<R: BufRead>(reader: R, file_label: &str, language: &str) -> Result<Treebank> {
    let mut sentences = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut in_sentence = false;

    let perr = |line: usize, message: String| Error::Parse {
        file: file_label.to_string(),
        line,
        message,
    };

    let mut finish = |tokens: &mut Vec<Token>,
                      sent_id: &mut Option<String>,
                      sentences: &mut Vec<ParsedSentence>|
     -> Result<()> {
        let id = sent_id
            .take()
            .unwrap_or_else(|| format!("{}:{}", file_label, sentences.len()));
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Structure {
                sentence_id: id,
                message: "duplicate sent_id".into(),
            });
        }
        let sentence = ParsedSentence {
            sentence_id: id,
            tokens: std::mem::take(tokens),
        };
        sentence.validate()?;
        sentences.push(sentence);
        Ok(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');

        if line.trim().is_empty() {
            if in_sentence {
                if tokens.is_empty() {
                    return Err(perr(lineno, "sentence without word tokens".into()));
                }
                finish(&mut tokens, &mut sent_id, &mut sentences)?;
                in_sentence = false;
            }
            continue;
        }
        in_sentence = true;

        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(perr(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id
            .parse()
            .map_err(|_| perr(lineno, format!("invalid token id {id:?}")))?;
        if index != tokens.len() + 1 {
            return Err(perr(
                lineno,
                format!("token id {index} out of sequence (expected {})", tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| perr(lineno, format!("invalid head {:?}", cols[6])))?;
        let deprel = cols[7].split(':').next().unwrap_or_default().to_string();
        tokens.push(Token {
            index,
            form: cols[1].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel,
        });
    }
    if in_sentence {
        if tokens.is_empty() {
            return Err(perr(0, "trailing sentence without word tokens".into()));
        }
        finish(&mut tokens, &mut sent_id, &mut sentences)?;
    }

    Ok(Treebank {
        language: language.to_string(),
        sentences,
    })
}

/// Serializes a treebank as CoNLL-U. Columns the toolkit does not model are `_`.
pub fn to_conllu(treebank: &Treebank) -> String {
    let mut out = String::new();
    for s in &treebank.sentences {
        let _ = writeln!(out, "# sent_id = {}", s.sentence_id);
        for t in &s.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.form, t.upos, t.head, t.deprel
            );
        }
        out.push('\n');
    }
    out
}

/// Undirected path lengths between all token pairs, by BFS from every node.
pub fn tree_distances(s: &ParsedSentence) -> DistanceMatrix {
    let n = s.len();
    let mut adj = vec![Vec::new(); n];
    for t in &s.tokens {
        if t.head != 0 {
            adj[t.index - 1].push(t.head - 1);
            adj[t.head - 1].push(t.index - 1);
        }
    }
    let mut d = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut d[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceMatrix { n, d }
}

/// Distances under a left-to-right chain analysis: `|i - j|`.
pub fn linear_baseline_distances(n: usize) -> DistanceMatrix {
    let mut d = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            d.push(i.abs_diff(j) as u32);
        }
    }
    DistanceMatrix { n, d }
}

/// One undirected edge `{dependent, head}` per non-root token (0-based).
pub fn gold_edges(s: &ParsedSentence) -> BTreeSet<Edge> {
    s.tokens
        .iter()
        .filter(|t| t.head != 0)
        .map(|t| edge(t.index - 1, t.head - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Treebank> {
        parse_conllu(text.as_bytes(), "test.conllu", "en")
    }

    #[test]
    fn minimal_sentence() {
        let tb = parse("1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n2\t!\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_\n\n")
            .unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb.sentences[0].heads(), vec![0, 1]);
        assert_eq!(tb.sentences[0].sentence_id, "test.conllu:0");
    }

    #[test]
    fn two_roots_is_a_structure_error() {
        let err = parse(
            "# sent_id = s1\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n",
        )
        .unwrap_err();
        match err {
            Error::Structure { sentence_id, .. } => assert_eq!(sentence_id, "s1"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cycle_is_a_structure_error() {
        let err = parse(
            "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t3\tdep\t_\t_\n3\tc\t_\tX\t_\t_\t2\tdep\t_\t_\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("# sent_id = a\n1\tHi\t_\tINTJ\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn skips_multiword_and_empty_nodes_and_strips_subtypes() {
        let text = "# sent_id = mw\n\
1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\t_\tADP\t_\t_\t3\tcase\t_\t_\n\
2\tel\t_\tDET\t_\t_\t3\tdet\t_\t_\n\
3\tlibro\t_\tNOUN\t_\t_\t0\troot\t_\t_\n\
3.1\tx\t_\tX\t_\t_\t_\t_\t3:dep\t_\n\
4\tfue\t_\tAUX\t_\t_\t3\taux:pass\t_\t_\n\n";
        let tb = parse(text).unwrap();
        let s = &tb.sentences[0];
        assert_eq!(s.sentence_id, "mw");
        assert_eq!(s.len(), 4);
        assert_eq!(s.tokens[3].deprel, "aux");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let one = "# sent_id = a\n1\tx\t_\tX\t_\t_\t0\troot\t_\t_\n\n";
        let err = parse(&format!("{one}{one}")).unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }

    #[test]
    fn chain_and_star_distances() {
        let chain = ParsedSentence::from_heads("c", &[0, 1, 2]).unwrap();
        let d = tree_distances(&chain);
        assert_eq!(d, DistanceMatrix::from_rows(3, vec![0, 1, 2, 1, 0, 1, 2, 1, 0]).unwrap());

        let star = ParsedSentence::from_heads("s", &[0, 1, 1, 1]).unwrap();
        let d = tree_distances(&star);
        assert_eq!(d.get(1, 2), 2);
        for k in 1..4 {
            assert_eq!(d.get(0, k), 1);
        }
    }

    #[test]
    fn linear_baseline_small_cases() {
        assert_eq!(
            linear_baseline_distances(3),
            DistanceMatrix::from_rows(3, vec![0, 1, 2, 1, 0, 1, 2, 1, 0]).unwrap()
        );
        assert_eq!(linear_baseline_distances(1), DistanceMatrix::from_rows(1, vec![0]).unwrap());
    }

    #[test]
    fn linear_baseline_matches_chain_tree_up_to_50() {
        for n in 1..=50 {
            let heads: Vec<usize> = (0..n).collect();
            let chain = ParsedSentence::from_heads("c", &heads).unwrap();
            assert_eq!(linear_baseline_distances(n), tree_distances(&chain), "n = {n}");
        }
    }

    #[test]
    fn gold_edges_examples() {
        let s = ParsedSentence::from_heads("a", &[0, 1, 2]).unwrap();
        assert_eq!(gold_edges(&s), BTreeSet::from([(0, 1), (1, 2)]));
        let s = ParsedSentence::from_heads("b", &[0, 1, 1]).unwrap();
        assert_eq!(gold_edges(&s), BTreeSet::from([(0, 1), (0, 2)]));
    }
}
