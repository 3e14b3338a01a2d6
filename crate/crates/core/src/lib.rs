//! Anchor-based random-effects regression for responses in metric spaces.
//!
//! Every training response serves as an anchor. Each response is turned into
//! log squared distances to the anchors, one scalar mixed-effects boosting model
//! is fitted per anchor, and a new prediction is the training response whose
//! anchor-distance profile best matches the (optionally personalised)
//! predicted profile.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anchor;
pub mod boost;
pub mod data;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod predict;
pub mod seeding;

pub use anchor::{AnchorEnsemble, AnchorPolicy, AnchorSet, DEFAULT_DELTA};
pub use boost::{FitConfig, MixedBoostModel, RegressionTree, VarianceComponents};
pub use data::{
    CovariateVector, Curve, Laplacian, LongitudinalDataset, MetricKind, PointCloud, ResponseObject,
    SplitPlan, SubjectId, VisitKey,
};
pub use error::{Error, Result};
pub use eval::{EvaluationReport, SimulationSpec, SplitOrder};
pub use metrics::{DistanceMatrix, GraphBuildConfig};
pub use predict::{CandidateSet, PredictionMode, PredictionRequest, PredictionResult};
