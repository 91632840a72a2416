//! Random dependency trees for oracle experiments and tests.

use std::collections::VecDeque;

use rand::Rng;

use crate::treebank::{ParsedSentence, Token, Treebank};

const UPOS: [&str; 8] = ["NOUN", "VERB", "ADJ", "DET", "ADP", "ADV", "PRON", "PUNCT"];

/// Head vector (1-based, 0 = root) of a uniformly random labelled tree on
/// `n` nodes with a uniformly random root.
pub fn random_heads<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    assert!(n >= 1);
    if n == 1 {
        return vec![0];
    }
    let mut adj = vec![Vec::new(); n];
    if n == 2 {
        adj[0].push(1);
        adj[1].push(0);
    } else {
        let pruefer: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
        let mut degree = vec![1usize; n];
        for &v in &pruefer {
            degree[v] += 1;
        }
        for &v in &pruefer {
            let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
            adj[leaf].push(v);
            adj[v].push(leaf);
            degree[leaf] -= 1;
            degree[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
        adj[rest[0]].push(rest[1]);
        adj[rest[1]].push(rest[0]);
    }

    let root = rng.random_range(0..n);
    let mut heads = vec![usize::MAX; n];
    heads[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if heads[v] == usize::MAX {
                heads[v] = u + 1;
                queue.push_back(v);
            }
        }
    }
    heads
}

fn deprel_for(upos: &str, rng: &mut (impl Rng + ?Sized)) -> &'static str {
    match upos {
        "ADJ" => "amod",
        "DET" => "det",
        "ADP" => "case",
        "ADV" => "advmod",
        "PRON" => "nsubj",
        "VERB" => "ccomp",
        "PUNCT" => "punct",
        _ => ["nsubj", "obj", "nmod", "obl"][rng.random_range(0..4)],
    }
}

/// A random sentence with plausible-looking POS tags and relation labels.
pub fn random_sentence<R: Rng + ?Sized>(id: String, n: usize, rng: &mut R) -> ParsedSentence {
    let heads = random_heads(n, rng);
    let tokens = heads
        .iter()
        .enumerate()
        .map(|(i, &head)| {
            let upos = if head == 0 {
                "VERB"
            } else {
                UPOS[rng.random_range(0..UPOS.len())]
            };
            let deprel = if head == 0 { "root" } else { deprel_for(upos, rng) };
            Token {
                index: i + 1,
                form: format!("t{}", i + 1),
                upos: upos.to_string(),
                head,
                deprel: deprel.to_string(),
            }
        })
        .collect();
    ParsedSentence {
        sentence_id: id,
        tokens,
    }
}

/// `count` random sentences with lengths drawn uniformly from `min_len..=max_len`.
pub fn random_treebank<R: Rng + ?Sized>(
    language: &str,
    count: usize,
    min_len: usize,
    max_len: usize,
    rng: &mut R,
) -> Treebank {
    assert!(1 <= min_len && min_len <= max_len);
    let sentences = (0..count)
        .map(|i| {
            let n = rng.random_range(min_len..=max_len);
            random_sentence(format!("{language}-{i}"), n, rng)
        })
        .collect();
    Treebank {
        language: language.to_string(),
        sentences,
    }
}
