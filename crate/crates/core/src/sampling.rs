//! Round-type gating, uniform client sampling, and exact participation probabilities.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_without_replacement, Lane, Purpose, RngStream};

/// Who participates and how often the estimator is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipationConfig {
    pub n: usize,
    /// Number of good clients `G`.
    pub good: usize,
    /// Cohort size `C` in compressed rounds.
    pub cohort: usize,
    /// Cohort size `Ĉ` in full-gradient rounds.
    pub refresh_cohort: usize,
    /// Probability `p` of a full-gradient round.
    pub p: f64,
    /// Assumed Byzantine fraction bound.
    pub delta: f64,
}

impl ParticipationConfig {
    pub fn num_byzantine(&self) -> usize {
        self.n - self.good
    }

    pub fn delta_real(&self) -> f64 {
        self.num_byzantine() as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.good > self.n {
            return bad(format!("need 0 <= G <= n with n >= 1, got n = {}, G = {}", self.n, self.good));
        }
        if !(1 <= self.cohort && self.cohort <= self.refresh_cohort && self.refresh_cohort <= self.n) {
            return bad(format!(
                "need 1 <= C <= Chat <= n, got C = {}, Chat = {}, n = {}",
                self.cohort, self.refresh_cohort, self.n
            ));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(0.0..0.5).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1/2), got {}", self.delta));
        }
        // delta_real <= delta and Chat >= delta_real n / delta, checked exactly
        let delta = decimal_rational(self.delta)?;
        let b = BigRational::from_integer(BigInt::from(self.num_byzantine()));
        let n = BigRational::from_integer(BigInt::from(self.n));
        if b > &delta * &n {
            return bad(format!("delta = {} is below the Byzantine fraction {}", self.delta, self.delta_real()));
        }
        let chat = BigRational::from_integer(BigInt::from(self.refresh_cohort));
        if self.num_byzantine() > 0 && chat * &delta < b {
            return bad(format!(
                "Chat = {} is below delta_real n / delta = {:.3}",
                self.refresh_cohort,
                self.num_byzantine() as f64 / self.delta
            ));
        }
        Ok(())
    }
}

/// The random choices of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub round: u64,
    /// `c_k = 1`: full gradients from a `Ĉ`-cohort.
    pub refresh: bool,
    /// Sampled client ids in increasing order.
    pub cohort: Vec<usize>,
    /// Minibatch indices per cohort member (parallel to `cohort`); empty in refresh rounds.
    pub batches: Vec<Vec<usize>>,
}

/// Minibatch requirements for compressed rounds.
#[derive(Debug, Clone, Copy)]
pub struct BatchSpec<'a> {
    pub size: usize,
    /// Local sample count of every client.
    pub shard_sizes: &'a [usize],
}

/// Draws round `k`: gate bit, cohort, and minibatches (with replacement).
pub fn sample_round(cfg: &ParticipationConfig, k: u64, seed: u64, batch: Option<BatchSpec<'_>>) -> RoundPlan {
    let mut gate = RngStream::new(seed, Lane::server(k, Purpose::Gate));
    let refresh = gate.random::<f64>() < cfg.p;
    if refresh {
        let mut rng = RngStream::new(seed, Lane::server(k, Purpose::Cohort));
        RoundPlan {
            round: k,
            refresh,
            cohort: draw_cohort(&mut rng, cfg.n, cfg.refresh_cohort),
            batches: Vec::new(),
        }
    } else {
        sample_cohort(cfg.n, cfg.cohort, k, seed, batch)
    }
}

/// A round without a gate: a uniform `size`-cohort of `[n]` and, if requested, its minibatches.
pub fn sample_cohort(n: usize, size: usize, k: u64, seed: u64, batch: Option<BatchSpec<'_>>) -> RoundPlan {
    let mut rng = RngStream::new(seed, Lane::server(k, Purpose::Cohort));
    let cohort = draw_cohort(&mut rng, n, size);
    let batches = match batch {
        Some(spec) => cohort
            .iter()
            .map(|&i| {
                let mut r = RngStream::new(seed, Lane::client(k, i, Purpose::Minibatch));
                let m = spec.shard_sizes[i];
                (0..spec.size).map(|_| r.random_range(0..m)).collect()
            })
            .collect(),
        None => Vec::new(),
    };
    RoundPlan {
        round: k,
        refresh: false,
        cohort,
        batches,
    }
}

/// Cohort for the forced full-gradient round that initialises the estimator.
pub fn initial_plan(cfg: &ParticipationConfig, seed: u64) -> RoundPlan {
    let mut rng = RngStream::new(seed, Lane::server(0, Purpose::InitCohort));
    RoundPlan {
        round: 0,
        refresh: true,
        cohort: draw_cohort(&mut rng, cfg.n, cfg.refresh_cohort),
        batches: Vec::new(),
    }
}

fn draw_cohort(rng: &mut RngStream, n: usize, size: usize) -> Vec<usize> {
    let mut cohort = sample_without_replacement(rng, n, size);
    cohort.sort_unstable();
    cohort
}

/// Exact rational value of the shortest decimal representation of `x`.
///
/// `0.3` becomes `3/10`, not the binary double nearest to it, so thresholds
/// like `ceil((1 - 0.3) * 10) = 7` come out as written.
pub fn decimal_rational(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "decimal conversion" });
    }
    let text = format!("{x}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot read {x} as a decimal")))?;
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// Smallest good count `t` with `t >= (1 - delta) C`.
pub fn good_threshold(cohort: usize, delta: f64) -> Result<usize> {
    let delta = decimal_rational(delta)?;
    let need = (BigRational::one() - delta) * BigRational::from_integer(BigInt::from(cohort));
    need.ceil()
        .to_integer()
        .to_usize()
        .ok_or_else(|| Error::InvalidConfig("threshold out of range".into()))
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn check_ranges(n: usize, good: usize, cohort: usize, delta: f64) -> Result<()> {
    if good > n || cohort == 0 || cohort > n || !(0.0..0.5).contains(&delta) {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= G <= n, 1 <= C <= n, 0 <= delta < 1/2; got n = {n}, G = {good}, C = {cohort}, delta = {delta}"
        )));
    }
    Ok(())
}

/// `p_G`: probability that a uniform `C`-subset of `[n]` holds at least `(1 - delta) C` good clients.
pub fn prob_good_majority(n: usize, good: usize, cohort: usize, delta: f64) -> Result<BigRational> {
    check_ranges(n, good, cohort, delta)?;
    let lo = good_threshold(cohort, delta)?;
    let mut total = BigUint::zero();
    for t in lo..=cohort {
        total += binomial(good, t) * binomial(n - good, cohort - t);
    }
    Ok(ratio(total, binomial(n, cohort)))
}

/// `P_{G_C}`: probability that a fixed good client is sampled, given a good-majority cohort.
pub fn prob_in_good_sample(n: usize, good: usize, cohort: usize, delta: f64) -> Result<BigRational> {
    check_ranges(n, good, cohort, delta)?;
    if good == 0 {
        return Err(Error::InvalidConfig("need at least one good client".into()));
    }
    let p_g = prob_good_majority(n, good, cohort, delta)?;
    if p_g.is_zero() {
        return Err(Error::ImpossibleCondition);
    }
    let lo = good_threshold(cohort, delta)?.max(1);
    let mut total = BigUint::zero();
    for t in lo..=cohort {
        total += binomial(good - 1, t - 1) * binomial(n - good, cohort - t);
    }
    let sum = ratio(total, binomial(n - 1, cohort - 1));
    let scale = BigRational::new(BigInt::from(cohort), BigInt::from(n)) / p_g;
    Ok(scale * sum)
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn cfg(p: f64) -> ParticipationConfig {
        ParticipationConfig {
            n: 20,
            good: 15,
            cohort: 4,
            refresh_cohort: 20,
            p,
            delta: 0.25,
        }
    }

    /// Subsets of `[n]` of size `c` (good clients are `0..g`): (all, good-majority, good-majority containing 0).
    fn enumerate(n: usize, g: usize, c: usize, delta: f64) -> (u64, u64, u64) {
        let delta = decimal_rational(delta).unwrap();
        let (mut all, mut maj, mut with0) = (0, 0, 0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != c {
                continue;
            }
            all += 1;
            let good_in = (mask & ((1u32 << g) - 1)).count_ones() as i64;
            // good_in >= (1 - delta) c  <=>  good_in * den >= (den - num) * c
            let (num, den) = (delta.numer().clone(), delta.denom().clone());
            if BigInt::from(good_in) * &den >= (&den - &num) * BigInt::from(c as i64) {
                maj += 1;
                if mask & 1 == 1 && g >= 1 {
                    with0 += 1;
                }
            }
        }
        (all, maj, with0)
    }

    #[test]
    fn decimal_conversion() {
        assert_eq!(decimal_rational(0.3).unwrap(), r(3, 10));
        assert_eq!(decimal_rational(0.25).unwrap(), r(1, 4));
        assert_eq!(decimal_rational(0.0).unwrap(), r(0, 1));
        assert_eq!(decimal_rational(-1.5).unwrap(), r(-3, 2));
        assert_eq!(decimal_rational(1e-7).unwrap(), r(1, 10_000_000));
        assert!(decimal_rational(f64::NAN).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(good_threshold(10, 0.3).unwrap(), 7);
        assert_eq!(good_threshold(4, 0.25).unwrap(), 3);
        assert_eq!(good_threshold(4, 0.2).unwrap(), 4);
        assert_eq!(good_threshold(1, 0.4).unwrap(), 1);
    }

    #[test]
    fn closed_forms() {
        for n in 2..=12usize {
            for g in 0..=n {
                assert_eq!(prob_good_majority(n, g, 1, 0.25).unwrap(), r(g as i64, n as i64));
                assert_eq!(
                    prob_good_majority(n, g, 2, 0.25).unwrap(),
                    r((g * g.saturating_sub(1)) as i64, (n * (n - 1)) as i64)
                );
                assert_eq!(prob_good_majority(n, g, n, 0.4).unwrap() == BigRational::one(), 5 * g >= 3 * n);
                if g >= 1 {
                    assert_eq!(prob_in_good_sample(n, g, 1, 0.25).unwrap(), r(1, g as i64));
                }
                if g >= 2 {
                    // C = 2: a sampled pair is a majority only if both are good
                    assert_eq!(prob_in_good_sample(n, g, 2, 0.25).unwrap(), r(2, g as i64));
                }
            }
            assert_eq!(prob_good_majority(n, n, n, 0.1).unwrap(), BigRational::one());
            assert_eq!(prob_in_good_sample(n, n, n, 0.1).unwrap(), BigRational::one());
        }
    }

    #[test]
    fn enumeration_example() {
        let (all, maj, with0) = enumerate(10, 7, 4, 0.25);
        assert_eq!(all, 210);
        assert_eq!(prob_good_majority(10, 7, 4, 0.25).unwrap(), r(maj as i64, 210));
        assert_eq!(prob_in_good_sample(10, 7, 4, 0.25).unwrap(), r(with0 as i64, maj as i64));
    }

    #[test]
    fn impossible_conditioning() {
        assert!(matches!(prob_in_good_sample(10, 1, 4, 0.25), Err(Error::ImpossibleCondition)));
        assert!(prob_good_majority(5, 6, 2, 0.1).is_err());
        assert!(prob_good_majority(5, 3, 0, 0.1).is_err());
        assert!(prob_good_majority(5, 3, 2, 0.5).is_err());
    }

    #[test]
    fn monotone_in_good_count() {
        for delta in [0.1, 0.25, 0.4] {
            for c in 1..=10 {
                let ps: Vec<BigRational> = (0..=10).map(|g| prob_good_majority(10, g, c, delta).unwrap()).collect();
                assert!(ps.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.2).validate().is_ok());
        let mut c = cfg(0.2);
        c.refresh_cohort = 19;
        assert!(c.validate().is_err(), "Chat below B / delta");
        c = cfg(0.2);
        c.delta = 0.2;
        assert!(c.validate().is_err(), "delta below delta_real");
        c = cfg(0.0);
        assert!(c.validate().is_err());
        c = cfg(0.2);
        c.cohort = 21;
        assert!(c.validate().is_err());
    }

    #[test]
    fn degenerate_gate() {
        for k in 0..200 {
            let plan = sample_round(&cfg(1.0), k, 3, None);
            assert!(plan.refresh);
            assert_eq!(plan.cohort, (0..20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn full_cohort_and_batches() {
        let mut c = cfg(0.5);
        c.cohort = 20;
        let sizes = vec![7; 20];
        for k in 0..100 {
            let plan = sample_round(&c, k, 9, Some(BatchSpec { size: 5, shard_sizes: &sizes }));
            assert_eq!(plan.cohort, (0..20).collect::<Vec<_>>());
            if plan.refresh {
                assert!(plan.batches.is_empty());
            } else {
                assert_eq!(plan.batches.len(), 20);
                assert!(plan.batches.iter().all(|b| b.len() == 5 && b.iter().all(|&j| j < 7)));
            }
        }
    }

    #[test]
    fn gate_frequency() {
        let c = cfg(0.2);
        let rounds = 100_000u64;
        let hits = (0..rounds).filter(|&k| sample_round(&c, k, 11, None).refresh).count() as f64;
        let sd = (0.2 * 0.8 / rounds as f64).sqrt();
        assert!((hits / rounds as f64 - 0.2).abs() < 3.0 * sd);
    }

    #[test]
    fn cohorts_are_uniform() {
        let c = ParticipationConfig { n: 6, good: 6, cohort: 3, refresh_cohort: 3, p: 1.0, delta: 0.0 };
        let draws = 1_000_000u64;
        let mut counts = std::collections::HashMap::new();
        for k in 0..draws {
            *counts.entry(sample_round(&c, k, 2, None).cohort).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 20);
        let expect = draws as f64 / 20.0;
        let sd = (expect * (1.0 - 1.0 / 20.0)).sqrt();
        for (subset, hits) in counts {
            assert!((hits as f64 - expect).abs() < 5.0 * sd, "{subset:?}: {hits}");
        }
    }

    #[test]
    fn deterministic_per_round() {
        let sizes = vec![50; 20];
        let spec = Some(BatchSpec { size: 3, shard_sizes: &sizes });
        for k in [0, 5, 1000] {
            assert_eq!(sample_round(&cfg(0.3), k, 1, spec), sample_round(&cfg(0.3), k, 1, spec));
        }
        assert_ne!(initial_plan(&cfg(0.3), 1).cohort.len(), 0);
    }
}
