//! Head-dependent difference vectors and their low-dimensional views.

mod cluster;
mod diffvec;
mod pca;
mod plot;
mod tsne;

pub use cluster::{cluster_summary, ClusterSummary, LabelStats};
pub use diffvec::{
    diff_vectors, read_vectors_tsv, relation_counts, top_relations, vectors_tsv, DiffFilter,
    DiffVector, Direction, LabelFilter,
};
pub use pca::{pca, PcaResult};
pub use plot::{points_tsv, read_points_tsv, render_svg, PointRecord};
pub use tsne::{
    conditional_probabilities, joint_probabilities, kl_divergence, low_dim_affinities, tsne,
    Conditional, Projection2D, ReductionMethod, TsneParams, TsneTrace,
};
