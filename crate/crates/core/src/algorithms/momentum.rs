//! Client-momentum SGD wrapped with the clipped-difference aggregation heuristic.
//!
//! The server keeps `g^{k-1}` and forms
//! `g^k = g^{k-1} + Agg({clip(g_i^k - g^{k-1})})`, which bounds the harm of a
//! Byzantine-held round by the clipping level.

use std::time::Instant;

use super::marina::{count_sampled, exchange, Exchange};
use super::{clip_level, AlgoState, RoundMetrics, Trajectory, World};
use crate::aggregation::AggregatorSpec;
use crate::attacks::MessageKind;
use crate::error::{Error, Result};
use crate::numerics::{clip_in_place, ClipLevel, Lane, Purpose, RealVector, RngStream};
use crate::sampling::{sample_cohort, BatchSpec};

pub const DEFAULT_BETA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumHeuristicConfig {
    pub gamma: f64,
    pub beta: f64,
    /// Clipping multiplier; `f64::INFINITY` turns clipping off.
    pub alpha: f64,
    pub cohort: usize,
    pub minibatch: usize,
    pub rounds: u64,
    pub max_epochs: Option<f64>,
    pub aggregator: AggregatorSpec,
    pub record_time: bool,
}

impl MomentumHeuristicConfig {
    pub fn validate(&self, world: &World) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("stepsize must be positive, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.beta));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("clipping multiplier must lie in (0, inf], got {}", self.alpha));
        }
        if self.cohort == 0 || self.cohort > world.n() {
            return bad(format!("cohort size {} outside 1..={}", self.cohort, world.n()));
        }
        if self.max_epochs.is_some_and(|e| !(e > 0.0)) {
            return bad("epoch budget must be positive".into());
        }
        if self.minibatch == 0 {
            return bad("minibatch size must be >= 1".into());
        }
        self.aggregator.validate()
    }
}

/// Server state plus one momentum buffer per client.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    /// `x` is `x^k`, `x_prev` is `x^{k-1}` and `g` is `g^{k-1}`.
    pub base: AlgoState,
    pub buffers: Vec<RealVector>,
}

impl MomentumState {
    pub fn new(world: &World) -> Self {
        let zero = RealVector::zeros(world.dim());
        Self {
            base: AlgoState::new(world.x0().clone(), zero.clone()),
            buffers: vec![zero; world.n()],
        }
    }
}

/// One round of the heuristic. `metrics.epochs` holds this round's cost only.
///
/// In the first round there is no previous step to scale the clipping level
/// by, so it runs unclipped.
pub fn momentum_heuristic_round(
    state: &MomentumState,
    cfg: &MomentumHeuristicConfig,
    world: &World,
    seed: u64,
) -> Result<(MomentumState, RoundMetrics)> {
    let start = cfg.record_time.then(Instant::now);
    let AlgoState { x, g, k, x_prev } = &state.base;
    let k = *k;
    let level = if k == 0 {
        ClipLevel::DISABLED
    } else {
        clip_level(cfg.alpha, x, x_prev)
    };
    let sizes = world.shard_sizes();
    let plan = sample_cohort(
        world.n(),
        cfg.cohort,
        k,
        seed,
        Some(BatchSpec {
            size: cfg.minibatch,
            shard_sizes: &sizes,
        }),
    );

    let mut buffers = state.buffers.clone();
    for (pos, &i) in plan.cohort.iter().enumerate() {
        let grad = world.client(i).minibatch_gradient(&plan.batches[pos], x)?;
        let m = &mut buffers[i];
        m.scale(cfg.beta);
        m.axpy(1.0 - cfg.beta, &grad);
    }
    let view = Exchange {
        round: k,
        x,
        g_prev: g,
        gamma: cfg.gamma,
        kind: MessageKind::MomentumVector,
    };
    let messages = exchange(world, &plan.cohort, false, view, |_, i| Ok(buffers[i].clone()))?;
    let coords_sent = messages.iter().map(RealVector::nnz).sum();

    let mut clip_activations = 0;
    let diffs: Vec<RealVector> = messages
        .into_iter()
        .map(|m| {
            let mut d = m.sub(g);
            clip_activations += usize::from(level.activates(&d));
            clip_in_place(&mut d, level);
            d
        })
        .collect();
    let mut rng = RngStream::new(seed, Lane::server(k, Purpose::Bucketing));
    let g_new = g.add(&cfg.aggregator.aggregate(&diffs, &mut rng)?);
    let mut x_new = x.clone();
    x_new.axpy(-cfg.gamma, &g_new);
    if !x_new.is_finite() {
        return Err(Error::NonFinite { context: "iterate" });
    }

    let (n_good_sampled, n_byz_sampled) = count_sampled(world, &plan.cohort);
    let (f_gap, grad_sq) = world.diagnostics(&x_new)?;
    let metrics = RoundMetrics {
        k: k + 1,
        f_gap,
        grad_sq,
        c: 0,
        n_good_sampled,
        n_byz_sampled,
        clip_activations,
        coords_sent,
        epochs: (n_good_sampled * cfg.minibatch) as f64 / world.epoch_size() as f64,
        wall_ns: start.map_or(0, |t| t.elapsed().as_nanos() as u64),
    };
    let next = MomentumState {
        base: AlgoState {
            x_prev: x.clone(),
            x: x_new,
            g: g_new,
            k: k + 1,
        },
        buffers,
    };
    Ok((next, metrics))
}

pub fn run_momentum_heuristic(cfg: &MomentumHeuristicConfig, world: &World, seed: u64) -> Result<Trajectory> {
    cfg.validate(world)?;
    let (initial_gap, initial_grad_sq) = world.diagnostics(world.x0())?;
    let mut state = MomentumState::new(world);
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    let mut epochs = 0.0;
    for _ in 0..cfg.rounds {
        let (next, mut metrics) = momentum_heuristic_round(&state, cfg, world, seed)?;
        epochs += metrics.epochs;
        metrics.epochs = epochs;
        rounds.push(metrics);
        state = next;
        if cfg.max_epochs.is_some_and(|e| epochs >= e) {
            break;
        }
    }
    Ok(Trajectory {
        initial_gap,
        initial_grad_sq,
        rounds,
        final_state: state.base,
    })
}
