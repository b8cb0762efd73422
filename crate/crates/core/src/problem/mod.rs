//! Objectives, gradient oracles, datasets and client splits.

mod dataset;
mod objective;
mod solver;
mod split;

pub use dataset::{parse_libsvm, synthetic_logistic, Dataset, SyntheticSpec};
pub use objective::{
    heterogeneity, AveragedObjective, FiniteSumObjective, LogisticObjective, QuadraticObjective,
    SmoothObjective, Smoothness,
};
pub use solver::{gradient_descent, reference_solution, ReferenceSolution, REFERENCE_MAX_ITERS};
pub use split::{split_clients, ClientAssignment, SplitMode};

/// Analytic smoothness bounds of an objective.
pub fn measure_smoothness(obj: &dyn SmoothObjective) -> Smoothness {
    obj.smoothness()
}
