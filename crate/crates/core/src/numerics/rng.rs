//! Counter-based random streams.
//!
//! Every draw in a simulation belongs to a lane `(round, party, purpose)`.
//! The lane is mapped injectively onto a ChaCha stream id under the
//! experiment seed, so lanes never share keystream and changing how one
//! lane is consumed cannot shift the draws of another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Who consumes a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Server,
    Client(u32),
}

/// What a lane is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Gate = 1,
    Cohort = 2,
    Minibatch = 3,
    Compression = 4,
    Bucketing = 5,
    /// Cohort draw for the estimator initialisation round.
    InitCohort = 6,
    InitBucketing = 7,
    Setup = 8,
    Data = 9,
    /// Free lane for Monte-Carlo checks.
    Verify = 10,
}

/// Identifies one independent stream under an experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lane {
    pub round: u64,
    pub party: Party,
    pub purpose: Purpose,
}

const SERVER_ID: u64 = (1 << 24) - 1;

impl Lane {
    pub fn new(round: u64, party: Party, purpose: Purpose) -> Self {
        Self {
            round,
            party,
            purpose,
        }
    }

    pub fn server(round: u64, purpose: Purpose) -> Self {
        Self::new(round, Party::Server, purpose)
    }

    pub fn client(round: u64, client: usize, purpose: Purpose) -> Self {
        Self::new(round, Party::Client(client as u32), purpose)
    }

    /// Packs the lane as `round:32 | party:24 | purpose:8`.
    fn stream_id(&self) -> u64 {
        assert!(self.round < (1 << 32), "round index exceeds lane capacity");
        let party = match self.party {
            Party::Server => SERVER_ID,
            Party::Client(id) => {
                assert!((id as u64) < SERVER_ID, "client id exceeds lane capacity");
                id as u64
            }
        };
        (self.round << 32) | (party << 8) | self.purpose as u64
    }
}

/// A reproducible stream of random bits for one lane.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, lane: Lane) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(lane.stream_id());
        Self { inner }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Uniform `k`-subset of `0..n` via a partial Fisher-Yates shuffle, in draw order.
pub fn sample_without_replacement<R: RngCore + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    use rand::Rng;
    assert!(k <= n, "cannot draw {k} of {n} without replacement");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Uniformly random permutation of `0..n`.
pub fn permutation<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    sample_without_replacement(rng, n, n)
}
