//! Detection of collective and point anomalies in the mean of cross-correlated
//! multivariate time series.
//!
//! The subset-maximised penalised saving of a segment is approximated by a
//! binary quadratic program which, for a banded precision matrix, is solved
//! exactly by dynamic programming in `O(p 2^r)` operations. Multiple anomalies
//! are then found with a pruned dynamic program over segmentations, and the
//! same machinery yields a single-changepoint statistic used inside binary
//! segmentation.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, simulation and
//! the command line live in the `capacc` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bqp;
pub mod capa;
pub mod cpt;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod normal;
pub mod saving;
pub mod structures;

pub use bqp::{brute_force_bqp, solve_banded_bqp, BqpInstance, BqpSolution};
pub use capa::{detect, point_saving, prune, CapaConfig, Detection, PeltState};
pub use cpt::{
    cpt_statistic, detect_multiple, detect_single, BaselineMode, ChangepointResult, CptConfig,
    PenaltyMode,
};
pub use error::{Error, Result};
pub use estimate::{
    gaussian_rank_correlation, robust_baseline, robust_covariance, structured_precision, whiten,
    RobustEstimates,
};
pub use graph::{banded_adjacency, build_plan, lattice_adjacency, Adjacency, NeighborhoodPlan};
pub use linalg::{BandMatrix, Matrix};
pub use metrics::{adjusted_rand_index, subset_metrics};
pub use model::{
    default_penalties, penalty_of, AnomalySet, CollectiveAnomaly, DataMatrix, PenaltyScheme,
    PointAnomaly, PrecisionModel, SegmentWindow,
};
pub use saving::{
    approx_saving, approximation_error_bound, build_anomaly_bqp, build_cpt_bqp, exact_saving,
    segment_stats, subset_mle, Regime, SavingResult, SegmentMeans, SegmentStats,
};
pub use structures::{car_precision, constant_correlation_precision};
