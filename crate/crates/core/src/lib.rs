//! Pure-attention hardmax transformer dynamics.
//!
//! Tokens are points in `R^d`. Each layer moves every token towards the tokens
//! with the largest `A`-weighted projection on it. Iterating the layer makes
//! tokens cluster around a few *leaders*; [`cluster`] extracts that structure
//! and checks it, and [`sentiment`] trains a tiny classifier on top of the
//! same dynamics.

pub mod audit;
pub mod cluster;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod geometry;
pub mod sample;
pub mod sentiment;

pub use audit::{audit_trajectory, TrajectoryAudit};
pub use cluster::{
    analyze, check_projection, detect_leaders, extract_clusters, verify_theorem1, ClusterKind, ClusterPoint,
    ClusterReport, LeaderRecord, ProjectionCertificate, TheoremVerdicts,
};
pub use dynamics::{run, step, step_hardmax, step_softmax, RunConfig, StepOutcome, StopReason, TrajectoryRecord};
pub use error::{Error, Result};
pub use geometry::{
    a_inner, attention_set, convex_hull_2d, factorize_spd, hull_contains, similarity_matrix, transform_configuration,
    AttentionSet, AttentionSpec, Point, SimilarityMatrix, SimilarityMode, SpdMatrix, TokenConfiguration,
};
