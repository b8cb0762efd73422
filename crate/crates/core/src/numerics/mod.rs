//! Vector arithmetic, seeded random lanes and the clipping operator.

mod clip;
mod rng;
mod vector;

pub use clip::{clip, clip_in_place, ClipLevel};
pub use rng::{permutation, sample_without_replacement, Lane, Party, Purpose, RngStream};
pub use vector::{mean, pairwise_sum, pairwise_vector_sum, squared_distance_mean, RealVector};
