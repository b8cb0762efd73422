//! Variance-reduced rounds with client sampling, compression and server-side clipping.

use std::time::Instant;

use rayon::prelude::*;

use super::{clip_level, AlgoState, RoundMetrics, Trajectory, World};
use crate::aggregation::AggregatorSpec;
use crate::attacks::{byzantine_message, is_majority, AttackContext, MessageKind};
use crate::compression::CompressorSpec;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{clip_in_place, Lane, Purpose, RealVector, RngStream};
use crate::problem::SmoothObjective;
use crate::sampling::{initial_plan, sample_round, BatchSpec, ParticipationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MarinaPpConfig {
    pub gamma: f64,
    /// Minibatch size `b`; `None` uses exact local gradient differences.
    pub minibatch: Option<usize>,
    pub p: f64,
    /// Clipping multiplier; `f64::INFINITY` turns clipping off.
    pub alpha: f64,
    /// `C`.
    pub cohort: usize,
    /// `Ĉ`.
    pub refresh_cohort: usize,
    pub rounds: u64,
    /// Stop early once the cumulative cost reaches this many epochs.
    pub max_epochs: Option<f64>,
    pub aggregator: AggregatorSpec,
    pub compressor: CompressorSpec,
    /// Fill `wall_ns`; off by default so metrics are reproducible bit for bit.
    pub record_time: bool,
}

impl MarinaPpConfig {
    pub fn participation(&self, world: &World) -> ParticipationConfig {
        ParticipationConfig {
            n: world.n(),
            good: world.num_good(),
            cohort: self.cohort,
            refresh_cohort: self.refresh_cohort,
            p: self.p,
            delta: world.delta(),
        }
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("stepsize must be positive, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("clipping multiplier must lie in (0, inf], got {}", self.alpha)));
        }
        if self.max_epochs.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::InvalidConfig("epoch budget must be positive".into()));
        }
        if self.minibatch == Some(0) {
            return Err(Error::InvalidConfig("minibatch size must be >= 1".into()));
        }
        check_dim(world.dim(), self.compressor.dim())?;
        self.aggregator.validate()?;
        self.participation(world).validate()
    }
}

/// Read-only view handed to Byzantine workers for one message exchange.
pub(super) struct Exchange<'a> {
    pub round: u64,
    pub x: &'a RealVector,
    pub g_prev: &'a RealVector,
    pub gamma: f64,
    pub kind: MessageKind,
}

/// Messages of `cohort` in cohort order: honest ones from good clients, attack payloads from Byzantines.
pub(super) fn exchange<F>(world: &World, cohort: &[usize], parallel: bool, view: Exchange<'_>, honest: F) -> Result<Vec<RealVector>>
where
    F: Fn(usize, usize) -> Result<RealVector> + Sync,
{
    let mut messages: Vec<RealVector> = if parallel {
        cohort.par_iter().enumerate().map(|(pos, &i)| honest(pos, i)).collect::<Result<_>>()?
    } else {
        cohort.iter().enumerate().map(|(pos, &i)| honest(pos, i)).collect::<Result<_>>()?
    };
    let Some(attack) = world.attack() else {
        return Ok(messages);
    };
    if cohort.iter().all(|&i| !world.is_byzantine(i)) {
        return Ok(messages);
    }
    let byz_majority = is_majority(cohort, &world.good_flags(), world.delta())?;
    let goods: Vec<RealVector> = cohort
        .iter()
        .zip(&messages)
        .filter(|(&i, _)| !world.is_byzantine(i))
        .map(|(_, m)| m.clone())
        .collect();
    for (pos, &i) in cohort.iter().enumerate() {
        if !world.is_byzantine(i) {
            continue;
        }
        let ctx = AttackContext {
            round: view.round,
            x0: world.x0(),
            x: view.x,
            g_prev: view.g_prev,
            gamma: view.gamma,
            good_messages: &goods,
            byz_majority,
            kind: view.kind,
            honest: Some(&messages[pos]),
        };
        match byzantine_message(attack, &ctx) {
            Ok(m) => messages[pos] = m,
            // nothing to imitate without good messages: behave honestly
            Err(Error::MissingAttackContext(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(messages)
}

pub(super) fn count_sampled(world: &World, cohort: &[usize]) -> (usize, usize) {
    let byz = cohort.iter().filter(|&&i| world.is_byzantine(i)).count();
    (cohort.len() - byz, byz)
}

/// `g^0`: robust aggregate of full gradients at `x^0` from a `Ĉ`-cohort.
///
/// Returns the estimator and the good clients' cost in epochs.
pub fn initial_estimator(cfg: &MarinaPpConfig, world: &World, seed: u64) -> Result<(RealVector, f64)> {
    let plan = initial_plan(&cfg.participation(world), seed);
    let x0 = world.x0();
    let zero = RealVector::zeros(world.dim());
    let view = Exchange {
        round: 0,
        x: x0,
        g_prev: &zero,
        gamma: cfg.gamma,
        kind: MessageKind::FullGradient,
    };
    let messages = exchange(world, &plan.cohort, true, view, |_, i| {
        world.client(i).full_gradient(x0)
    })?;
    let mut rng = RngStream::new(seed, Lane::server(0, Purpose::InitBucketing));
    let g0 = cfg.aggregator.aggregate(&messages, &mut rng)?;
    let evals: usize = plan
        .cohort
        .iter()
        .filter(|&&i| !world.is_byzantine(i))
        .map(|&i| world.client(i).num_components())
        .sum();
    Ok((g0, evals as f64 / world.epoch_size() as f64))
}

/// One round. `metrics.epochs` holds this round's cost only.
pub fn marina_pp_round(state: &AlgoState, cfg: &MarinaPpConfig, world: &World, seed: u64) -> Result<(AlgoState, RoundMetrics)> {
    let start = cfg.record_time.then(Instant::now);
    let k = state.k;
    let mut x_new = state.x.clone();
    x_new.axpy(-cfg.gamma, &state.g);
    if !x_new.is_finite() {
        return Err(Error::NonFinite { context: "iterate" });
    }
    let level = clip_level(cfg.alpha, &x_new, &state.x);

    let sizes = world.shard_sizes();
    let batch = cfg.minibatch.map(|size| BatchSpec {
        size,
        shard_sizes: &sizes,
    });
    let plan = sample_round(&cfg.participation(world), k, seed, batch);
    let view = Exchange {
        round: k,
        x: &x_new,
        g_prev: &state.g,
        gamma: cfg.gamma,
        kind: if plan.refresh {
            MessageKind::FullGradient
        } else {
            MessageKind::GradientDifference
        },
    };
    let parallel = plan.refresh || cfg.minibatch.is_none();
    let mut messages = exchange(world, &plan.cohort, parallel, view, |pos, i| {
        let client = world.client(i);
        if plan.refresh {
            return client.full_gradient(&x_new);
        }
        let diff = match cfg.minibatch {
            Some(_) => client.minibatch_delta(&plan.batches[pos], &x_new, &state.x)?,
            None => client.full_gradient(&x_new)?.sub(&client.full_gradient(&state.x)?),
        };
        let mut rng = RngStream::new(seed, Lane::client(k, i, Purpose::Compression));
        cfg.compressor.compress(&diff, &mut rng)
    })?;

    let coords_sent = messages.iter().map(RealVector::nnz).sum();
    let mut clip_activations = 0;
    if !plan.refresh {
        for m in &mut messages {
            clip_activations += usize::from(level.activates(m));
            clip_in_place(m, level);
        }
    }
    let mut rng = RngStream::new(seed, Lane::server(k, Purpose::Bucketing));
    let aggregate = cfg.aggregator.aggregate(&messages, &mut rng)?;
    let g_new = if plan.refresh {
        aggregate
    } else {
        debug_assert!(
            level.is_disabled()
                || aggregate.norm() <= cfg.aggregator.f_a_constant(world.dim()).f_a * level.lambda() * (1.0 + 1e-9) + 1e-300,
            "clipped update exceeds F_A lambda"
        );
        state.g.add(&aggregate)
    };

    let evals: usize = plan
        .cohort
        .iter()
        .filter(|&&i| !world.is_byzantine(i))
        .map(|&i| match (plan.refresh, cfg.minibatch) {
            (true, _) => world.client(i).num_components(),
            (false, Some(b)) => 2 * b,
            (false, None) => 2 * world.client(i).num_components(),
        })
        .sum();
    let (f_gap, grad_sq) = world.diagnostics(&x_new)?;
    let (n_good_sampled, n_byz_sampled) = count_sampled(world, &plan.cohort);
    let metrics = RoundMetrics {
        k: k + 1,
        f_gap,
        grad_sq,
        c: u8::from(plan.refresh),
        n_good_sampled,
        n_byz_sampled,
        clip_activations,
        coords_sent,
        epochs: evals as f64 / world.epoch_size() as f64,
        wall_ns: start.map_or(0, |t| t.elapsed().as_nanos() as u64),
    };
    let next = AlgoState {
        x_prev: state.x.clone(),
        x: x_new,
        g: g_new,
        k: k + 1,
    };
    Ok((next, metrics))
}

/// Initialises `g^0` and runs `cfg.rounds` rounds from `world.x0()`, or fewer
/// if the epoch budget runs out first.
pub fn run_marina_pp(cfg: &MarinaPpConfig, world: &World, seed: u64) -> Result<Trajectory> {
    cfg.validate(world)?;
    let (initial_gap, initial_grad_sq) = world.diagnostics(world.x0())?;
    if cfg.rounds == 0 {
        return Ok(Trajectory {
            initial_gap,
            initial_grad_sq,
            rounds: Vec::new(),
            final_state: AlgoState::new(world.x0().clone(), RealVector::zeros(world.dim())),
        });
    }
    let (g0, mut epochs) = initial_estimator(cfg, world, seed)?;
    let mut state = AlgoState::new(world.x0().clone(), g0);
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        let (next, mut metrics) = marina_pp_round(&state, cfg, world, seed)?;
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
        final_state: state,
    })
}

/// Plain gradient descent on the good clients' objective, with the same metrics.
pub fn run_reference_gd(world: &World, gamma: f64, rounds: u64, record_time: bool) -> Result<Trajectory> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("stepsize must be positive, got {gamma}")));
    }
    let f = world.objective();
    let (initial_gap, initial_grad_sq) = world.diagnostics(world.x0())?;
    let good: Vec<usize> = (0..world.n()).filter(|&i| !world.is_byzantine(i)).collect();
    let per_round: usize = good.iter().map(|&i| world.client(i).num_components()).sum();
    let mut state = AlgoState::new(world.x0().clone(), f.full_gradient(world.x0())?);
    let mut out = Vec::with_capacity(rounds as usize);
    let mut epochs = 0.0;
    for _ in 0..rounds {
        let start = record_time.then(Instant::now);
        let mut x_new = state.x.clone();
        x_new.axpy(-gamma, &state.g);
        if !x_new.is_finite() {
            return Err(Error::NonFinite { context: "iterate" });
        }
        let g_new = f.full_gradient(&x_new)?;
        epochs += per_round as f64 / world.epoch_size() as f64;
        let (f_gap, grad_sq) = world.diagnostics(&x_new)?;
        out.push(RoundMetrics {
            k: state.k + 1,
            f_gap,
            grad_sq,
            c: 1,
            n_good_sampled: good.len(),
            n_byz_sampled: 0,
            clip_activations: 0,
            coords_sent: good.len() * world.dim(),
            epochs,
            wall_ns: start.map_or(0, |t| t.elapsed().as_nanos() as u64),
        });
        state.x_prev = std::mem::replace(&mut state.x, x_new);
        state.g = g_new;
        state.k += 1;
    }
    Ok(Trajectory {
        initial_gap,
        initial_grad_sq,
        rounds: out,
        final_state: state,
    })
}
