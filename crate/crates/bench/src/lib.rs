//! Input builders shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synprobe::synthetic::random_treebank;
use synprobe::{synth_oracle_embeddings, EmbeddingFile, Treebank};

/// Random trees with noisy oracle embeddings.
pub fn oracle_corpus(
    sentences: usize,
    max_len: usize,
    pad_dim: usize,
    seed: u64,
) -> (Treebank, EmbeddingFile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tb = random_treebank("xx", sentences, 2, max_len, &mut rng);
    let emb = synth_oracle_embeddings(&tb, pad_dim, 0.05, seed).expect("pad_dim covers max_len");
    (tb, emb)
}

/// Entries uniform in `[-1, 1)`.
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Symmetric distance-like matrix with zero diagonal.
pub fn distance_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let a = uniform_matrix(n, n, seed).abs();
    let mut d = &a + a.transpose();
    d.fill_diagonal(0.0);
    d
}
