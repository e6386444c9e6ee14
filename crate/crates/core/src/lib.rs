//! Cluster-guided contrastive deep graph clustering.
//!
//! The pipeline smooths node features over the graph, encodes them with two
//! un-shared MLPs, clusters the fused embedding with K-means, and trains the
//! encoders with a contrastive loss restricted to high-confidence nodes.

pub mod augment;
pub mod clustering;
pub mod error;
pub mod grad;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod smoothing;
pub mod tensor;
pub mod trainer;

pub use error::{CcgcError, Result};
