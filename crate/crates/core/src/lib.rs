//! Trajectory similarity and clustering with isolation distributional kernels.
//!
//! Trajectories are treated as point sets drawn from an unknown distribution.
//! The Isolation Kernel ([`ik`]) gives a sparse, data-dependent feature map for
//! points; averaging it over a trajectory ([`dist`]) yields a fixed-length
//! embedding whose dot products are the distributional kernel. [`tidkc`] runs
//! the two-level kernel clustering on those embeddings, [`baselines`] provides
//! Hausdorff and DTW for comparison and [`eval`] scores the results.

pub mod baselines;
pub mod data;
pub mod dist;
mod error;
pub mod eval;
pub mod ik;
pub mod tidkc;

pub use baselines::{dtw, hausdorff, pairwise_matrix, DistanceMatrix, Measure};
pub use data::{Label, Trajectory, TrajectoryDataset};
pub use dist::{GDKParams, KernelTag, MeanMapVector, NystromMap};
pub use error::{Error, Result};
pub use eval::{ari, nmi, precision_at_k, PrecisionCurve, Ranking};
pub use ik::{IKParams, IsolationKernelModel, SparseFeatureVector};
pub use tidkc::{cluster, cluster_timed, ClusteringResult, PhaseTimings, TidkcParams};
