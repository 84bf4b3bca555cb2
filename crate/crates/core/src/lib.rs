//! Cluster-based A/B testing on networks with interference.
//!
//! The crate covers the whole experimental pipeline:
//!
//! * [`graph`]: undirected simple graphs and cluster partitions,
//! * [`synth`]: clustered small-world networks with random reconnection edges,
//! * [`ingest`]: edge-list loading and label-propagation clustering,
//! * [`balance`]: cluster covariates and Mahalanobis imbalance,
//! * [`randomization`]: user-level, cluster-level and cluster-adaptive designs,
//! * [`outcome`]: responses under a linear spill-over model,
//! * [`estimation`]: difference-in-means and cluster-adjusted estimators,
//! * [`harness`]: seeded, parallel Monte-Carlo replications and summaries,
//! * [`report`]: CSV/JSON writers for summaries and raw records,
//! * [`standin`]: a synthetic call-log network used when no real log is available.

pub mod balance;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod linalg;
pub mod outcome;
pub mod randomization;
pub mod report;
pub mod rng;
pub mod standin;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{ClusterPartition, Graph};
