//! Byzantine worker behaviours.
//!
//! Byzantines collude: they see every good message of the round, the
//! current iterate and the server estimator, but not the server's random
//! lanes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::RealVector;
use crate::sampling::good_threshold;

pub const ALIE_DEFAULT_Z: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    BitFlipping,
    /// Honest protocol on a copy of the local data with labels `y -> 1 - y`.
    LabelFlipping,
    /// A little is enough: `mean + z * std` of the good messages, per coordinate.
    Alie {
        #[serde(default = "alie_z")]
        z: f64,
    },
    /// Steer the next iterate back to `x^0` whenever Byzantines hold the round.
    ShiftBack,
}

fn alie_z() -> f64 {
    ALIE_DEFAULT_Z
}

impl AttackKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackKind::Alie { z } if !(z >= 0.0 && z.is_finite()) => {
                Err(Error::InvalidConfig(format!("ALIE multiplier must be finite and >= 0, got {z}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether Byzantine workers train on label-flipped data.
    pub fn flips_labels(&self) -> bool {
        matches!(self, AttackKind::LabelFlipping)
    }
}

/// What the server does with the message it receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Used directly as the new estimator (full-gradient rounds).
    FullGradient,
    /// Added to the previous estimator after aggregation.
    GradientDifference,
    /// Client momentum; the server aggregates its difference to the previous estimator.
    MomentumVector,
}

/// Everything a colluding Byzantine worker can see in one round.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub round: u64,
    pub x0: &'a RealVector,
    /// Iterate the server will step from once the estimator is updated.
    pub x: &'a RealVector,
    /// Estimator held by the server before this round's update.
    pub g_prev: &'a RealVector,
    pub gamma: f64,
    /// Honest messages of the sampled good clients.
    pub good_messages: &'a [RealVector],
    pub byz_majority: bool,
    pub kind: MessageKind,
    /// What this worker would send if it followed the protocol.
    pub honest: Option<&'a RealVector>,
}

pub fn byzantine_message(kind: &AttackKind, ctx: &AttackContext<'_>) -> Result<RealVector> {
    let honest = || ctx.honest.cloned().ok_or(Error::MissingAttackContext("honest protocol message"));
    match *kind {
        AttackKind::BitFlipping => honest().map(|h| h.neg()),
        AttackKind::LabelFlipping => honest(),
        AttackKind::Alie { z } => alie(ctx.good_messages, z),
        AttackKind::ShiftBack if !ctx.byz_majority => honest(),
        AttackKind::ShiftBack => shift_back(ctx),
    }
}

/// Payload that makes the next step land on `x0` when the aggregate equals it.
///
/// The server steps `x - gamma g_new`, so the target estimator is
/// `g_new = (x - x0) / gamma`; difference messages subtract `g_prev`.
fn shift_back(ctx: &AttackContext<'_>) -> Result<RealVector> {
    check_dim(ctx.x0.dim(), ctx.x.dim())?;
    if !(ctx.gamma > 0.0) {
        return Err(Error::MissingAttackContext("positive stepsize"));
    }
    let mut target = ctx.x.sub(ctx.x0);
    target.scale(1.0 / ctx.gamma);
    Ok(match ctx.kind {
        MessageKind::FullGradient | MessageKind::MomentumVector => target,
        MessageKind::GradientDifference => {
            check_dim(target.dim(), ctx.g_prev.dim())?;
            target.sub(ctx.g_prev)
        }
    })
}

fn alie(goods: &[RealVector], z: f64) -> Result<RealVector> {
    let mean = crate::numerics::mean(goods).map_err(|_| Error::MissingAttackContext("good messages"))?;
    if z == 0.0 {
        return Ok(mean);
    }
    let m = goods.len() as f64;
    let mut var = RealVector::zeros(mean.dim());
    for v in goods {
        for i in 0..mean.dim() {
            let d = v[i] - mean[i];
            var[i] += d * d;
        }
    }
    let mut out = mean;
    for i in 0..out.dim() {
        out[i] += z * (var[i] / m).sqrt();
    }
    Ok(out)
}

/// True when fewer than `ceil((1 - delta) |S|)` of the sampled clients are good.
pub fn is_majority(sampled: &[usize], is_good: &[bool], delta: f64) -> Result<bool> {
    if sampled.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut good = 0;
    for &i in sampled {
        good += usize::from(*is_good.get(i).ok_or(Error::InvalidIndex {
            index: i,
            len: is_good.len(),
        })?);
    }
    Ok(good < good_threshold(sampled.len(), delta)?)
}
