//! Structural probes: rank-constrained linear maps under which squared
//! distances between contextual word vectors reproduce dependency-tree
//! distances, plus the evaluation, subspace-geometry and dimensionality
//! reduction tools built around them.
//!
//! Data flows from [`treebank`] (CoNLL-U trees) and [`embstore`] (EMB1 word
//! vectors) into [`probe`] training, then into [`eval`], [`geometry`] and
//! [`reduction`].

pub mod embstore;
pub mod error;
pub mod eval;
pub mod geometry;
mod linalg;
pub mod manifest;
pub mod probe;
pub mod reduction;
pub mod stats;
pub mod synthetic;
pub mod treebank;

pub use embstore::{
    align_check, read_emb, synth_oracle_embeddings, write_emb, AlignReport, Dtype,
    EmbeddedSentence, EmbeddingFile,
};
pub use error::{Error, Result};
pub use eval::{
    evaluate, extrapolation_uuas, mst_decode, transfer_grid, uuas, AdjectiveOrder, DsprMode,
    EvalOptions, EvalReport, Metric, TransferInputs, TransferMatrix,
};
pub use geometry::{mean_angle_matrix, ordering_correlation, principal_angles, AngleMatrix};
pub use manifest::{Manifest, Split};
pub use probe::{load_probe, save_probe, train_probe, ProbeParams, TrainConfig, TrainLog};
pub use treebank::{
    gold_edges, linear_baseline_distances, load_conllu, tree_distances, DistanceMatrix, Edge,
    ParsedSentence, Token, Treebank,
};
