//! Optimisation methods driven round by round over a simulated federation.

mod marina;
mod momentum;
mod theory;
mod world;

use serde::{Deserialize, Serialize};

use crate::numerics::{ClipLevel, RealVector};

pub use marina::{
    initial_estimator, marina_pp_round, run_marina_pp, run_reference_gd, MarinaPpConfig,
};
pub use momentum::{
    momentum_heuristic_round, run_momentum_heuristic, MomentumHeuristicConfig, MomentumState, DEFAULT_BETA,
};
pub use theory::{theorem_constants, theory_inputs, TheoremVariant, TheoryConstants, TheoryInputs};
pub use world::World;

/// Iterate, server estimator, round counter and previous iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoState {
    pub x: RealVector,
    pub g: RealVector,
    pub k: u64,
    pub x_prev: RealVector,
}

impl AlgoState {
    pub fn new(x0: RealVector, g0: RealVector) -> Self {
        Self {
            x_prev: x0.clone(),
            x: x0,
            g: g0,
            k: 0,
        }
    }
}

/// One row per executed round, describing the iterate after the round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Index of the reported iterate `x^k` (rounds executed so far).
    pub k: u64,
    /// `f(x^k) - f*`, or `f(x^k)` when `f*` is unknown.
    pub f_gap: f64,
    pub grad_sq: f64,
    /// Gate bit of the round that produced `x^k`'s estimator.
    pub c: u8,
    pub n_good_sampled: usize,
    pub n_byz_sampled: usize,
    /// Received messages with norm above the clipping level.
    pub clip_activations: usize,
    /// Nonzero coordinates received by the server.
    pub coords_sent: usize,
    /// Cumulative component-gradient evaluations of good clients, in epochs.
    pub epochs: f64,
    /// Wall time of the round; 0 unless timing was requested.
    pub wall_ns: u64,
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `f(x^0) - f*` and `|grad f(x^0)|^2`.
    pub initial_gap: f64,
    pub initial_grad_sq: f64,
    pub rounds: Vec<RoundMetrics>,
    pub final_state: AlgoState,
}

impl Trajectory {
    pub fn final_gap(&self) -> f64 {
        self.rounds.last().map_or(self.initial_gap, |r| r.f_gap)
    }

    /// First epoch count at which the gap is at most `target`.
    pub fn epochs_to_gap(&self, target: f64) -> Option<f64> {
        self.rounds.iter().find(|r| r.f_gap <= target).map(|r| r.epochs)
    }
}

/// `lambda = alpha |x_new - x_old|`; an infinite `alpha` disables clipping.
pub fn clip_level(alpha: f64, x_new: &RealVector, x_old: &RealVector) -> ClipLevel {
    if alpha.is_infinite() {
        ClipLevel::DISABLED
    } else {
        ClipLevel::new(alpha * x_new.distance(x_old))
    }
}
