//! The clipping operator `clip_lambda(x) = min{1, lambda / |x|} x`, with `clip_lambda(0) = 0`.

use serde::{Deserialize, Serialize};

use super::vector::RealVector;

/// Clipping radius; `+inf` disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipLevel(f64);

impl ClipLevel {
    pub const DISABLED: ClipLevel = ClipLevel(f64::INFINITY);

    /// Panics on negative or NaN radii.
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "clip level must be nonnegative, got {lambda}");
        Self(lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.0
    }

    pub fn is_disabled(&self) -> bool {
        self.0.is_infinite()
    }

    /// True when clipping would rescale `x`.
    pub fn activates(&self, x: &RealVector) -> bool {
        !self.is_disabled() && x.norm() > self.0
    }
}

pub fn clip(x: &RealVector, level: ClipLevel) -> RealVector {
    let mut out = x.clone();
    clip_in_place(&mut out, level);
    out
}

pub fn clip_in_place(x: &mut RealVector, level: ClipLevel) {
    if level.is_disabled() {
        return;
    }
    let norm = x.norm();
    if norm == 0.0 || norm <= level.0 {
        return;
    }
    x.scale(level.0 / norm);
}
