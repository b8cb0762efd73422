//! Monte-Carlo and enumeration checks of the building blocks' contracts.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorSpec, Rule};
use crate::compression::{CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::numerics::{clip, ClipLevel, Lane, Purpose, RealVector, RngStream};
use crate::sampling::{prob_good_majority, prob_in_good_sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Compressors,
    Aggregators,
    ClippingLemma,
    Probabilities,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Compressors,
        Suite::Aggregators,
        Suite::ClippingLemma,
        Suite::Probabilities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Compressors => "compressors",
            Suite::Aggregators => "aggregators",
            Suite::ClippingLemma => "clipping_lemma",
            Suite::Probabilities => "probabilities",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite `{s}`")))
    }
}

/// One observed quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            passed: observed <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}/{}: observed {:.6e}, bound {:.6e}",
                if c.passed { "PASS" } else { "FAIL" },
                self.suite.name(),
                c.name,
                c.observed,
                c.bound
            )?;
        }
        Ok(())
    }
}

pub fn verify_suite(suite: Suite, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let checks = match suite {
        Suite::Compressors => compressors(trials, seed)?,
        Suite::Aggregators => aggregators(trials, seed)?,
        Suite::ClippingLemma => clipping_lemma(trials, seed),
        Suite::Probabilities => probabilities()?,
    };
    Ok(VerifyReport { suite, checks })
}

fn gaussian(rng: &mut RngStream, dim: usize) -> RealVector {
    RealVector::from((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>())
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

const COMPRESSOR_DIM: usize = 10;
const COMPRESSOR_VECTORS: usize = 20;

fn compressors(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let kinds = [
        CompressorKind::Identity,
        CompressorKind::RandK { k: 5 },
        CompressorKind::L2Quantization,
    ];
    let mut checks = Vec::new();
    for kind in kinds {
        let q = CompressorSpec::new(kind, COMPRESSOR_DIM)?;
        let mut worst_mean: f64 = 0.0;
        let mut worst_var: f64 = 0.0;
        let mut worst_var_slack: f64 = 0.0;
        let mut worst_inflation: f64 = 0.0;
        for v in 0..COMPRESSOR_VECTORS {
            let mut vrng = RngStream::new(seed, Lane::client(0, v, Purpose::Verify));
            let x = gaussian(&mut vrng, COMPRESSOR_DIM);
            let mut rng = RngStream::new(seed, Lane::client(1, v, Purpose::Verify));
            let mut sum = RealVector::zeros(COMPRESSOR_DIM);
            let mut ratios = Vec::with_capacity(trials);
            for _ in 0..trials {
                let y = q.compress(&x, &mut rng)?;
                worst_inflation = worst_inflation.max(y.norm() / x.norm());
                ratios.push(y.distance_sq(&x) / x.norm_sq());
                sum.add_assign(&y);
            }
            sum.scale(1.0 / trials as f64);
            worst_mean = worst_mean.max(sum.distance(&x) / x.norm());
            let (var, sd) = mean_and_sd(&ratios);
            worst_var = worst_var.max(var);
            worst_var_slack = worst_var_slack.max(4.0 * sd / (trials as f64).sqrt());
        }
        let name = format!("{kind:?}");
        let omega = q.omega();
        checks.push(Check::at_most(
            format!("{name} mean relative error"),
            worst_mean,
            0.01f64.max(4.0 * (omega / trials as f64).sqrt()),
        ));
        checks.push(Check::at_most(
            format!("{name} variance ratio"),
            worst_var,
            omega + 0.05f64.max(worst_var_slack),
        ));
        checks.push(Check::at_most(
            format!("{name} norm inflation"),
            worst_inflation,
            q.dq_bound() * (1.0 + 1e-12),
        ));
    }
    Ok(checks)
}

fn aggregators(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let dim = 5;
    let rules = [
        Rule::Mean,
        Rule::CoordinateMedian,
        Rule::geometric_median(),
        Rule::Krum {
            assumed_byzantine: None,
            delta: 0.1,
        },
        Rule::TrimmedMean { trim: 0.2 },
    ];
    let mut checks = Vec::new();
    for rule in rules {
        for bucket in [None, Some(2)] {
            let spec = AggregatorSpec { rule, bucket_size: bucket };
            let f_a = spec.f_a_constant(dim).f_a;
            let mut worst: f64 = 0.0;
            let mut rng = RngStream::new(seed, Lane::server(0, Purpose::Verify));
            for _ in 0..trials {
                let m = rng.random_range(8..=14);
                let inputs: Vec<RealVector> = (0..m)
                    .map(|_| {
                        let scale = (2.0 * rng.sample::<f64, _>(StandardNormal)).exp();
                        gaussian(&mut rng, dim).scaled(scale)
                    })
                    .collect();
                let max_norm = inputs.iter().map(RealVector::norm).fold(0.0, f64::max);
                let out = spec.aggregate(&inputs, &mut rng)?;
                worst = worst.max(out.norm() / max_norm);
            }
            let name = match bucket {
                Some(s) => format!("{rule:?} with buckets of {s} / F_A"),
                None => format!("{rule:?} / F_A"),
            };
            checks.push(Check::at_most(name, worst / f_a, 1.0 + 1e-9));
        }
    }
    Ok(checks)
}

fn clipping_lemma(trials: usize, seed: u64) -> Vec<Check> {
    let dim = 10;
    let lambda = 1.0;
    let level = ClipLevel::new(lambda);
    let mut checks = Vec::new();
    for (a, frac) in [0.0, 0.25, 0.5].into_iter().enumerate() {
        for (b, sigma) in [0.1, 0.5, 1.0, 2.0, 10.0].into_iter().enumerate() {
            let mut rng = RngStream::new(seed, Lane::client(a as u64, b, Purpose::Verify));
            let mut x = gaussian(&mut rng, dim);
            let norm = x.norm();
            x.scale(frac * lambda / norm);
            let per_coord = sigma * lambda / (dim as f64).sqrt();
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..trials {
                let noise = gaussian(&mut rng, dim).scaled(per_coord);
                let sample = x.add(&noise);
                num += clip(&sample, level).distance_sq(&x);
                den += noise.norm_sq();
            }
            checks.push(Check::at_most(
                format!("|x| = {frac} lambda, sigma = {sigma} lambda"),
                num / den,
                10.0,
            ));
        }
    }
    checks
}

/// The probability grid: every `n <= 12`, `1 <= G <= n`, `C` and these fractions.
pub const PROBABILITY_DELTAS: [(i64, i64); 5] = [(1, 10), (1, 5), (1, 4), (3, 10), (2, 5)];

fn probabilities() -> Result<Vec<Check>> {
    let mut total = 0usize;
    let mut equal = 0usize;
    for n in 1..=12usize {
        // at least one good client is required by the sampling module
        for good in 1..=n {
            // subsets of [n] by (size, good members), and those containing client 0
            let mut count = vec![vec![0i64; n + 1]; n + 1];
            let mut with_first = vec![vec![0i64; n + 1]; n + 1];
            let good_mask = (1u32 << good) - 1;
            for mask in 0u32..(1 << n) {
                let size = mask.count_ones() as usize;
                let t = (mask & good_mask).count_ones() as usize;
                count[size][t] += 1;
                if mask & 1 == 1 {
                    with_first[size][t] += 1;
                }
            }
            for c in 1..=n {
                for &(num, den) in &PROBABILITY_DELTAS {
                    let delta = num as f64 / den as f64;
                    // t >= (1 - delta) c  <=>  t den >= (den - num) c
                    let majority = |t: usize| (t as i64) * den >= (den - num) * c as i64;
                    let hits: i64 = (0..=c).filter(|&t| majority(t)).map(|t| count[c][t]).sum();
                    let all: i64 = count[c].iter().sum();
                    let first: i64 = (0..=c).filter(|&t| majority(t)).map(|t| with_first[c][t]).sum();
                    let ratio = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));

                    total += 1;
                    if prob_good_majority(n, good, c, delta)? == ratio(hits, all) {
                        equal += 1;
                    }
                    total += 1;
                    let same = match prob_in_good_sample(n, good, c, delta) {
                        Ok(v) => hits > 0 && v == ratio(first, hits),
                        Err(Error::ImpossibleCondition) => hits == 0,
                        Err(e) => return Err(e),
                    };
                    if same {
                        equal += 1;
                    }
                }
            }
        }
    }
    Ok(vec![Check {
        name: format!("exact matches out of {total}"),
        observed: equal as f64,
        bound: total as f64,
        passed: equal == total,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_zero_variance() {
        let r = verify_suite(Suite::Compressors, 50, 1).unwrap();
        let c = r.checks.iter().find(|c| c.name == "Identity variance ratio").unwrap();
        assert_eq!(c.observed, 0.0);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn probability_enumeration_agrees() {
        let r = verify_suite(Suite::Probabilities, 1, 0).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks[0].bound, r.checks[0].observed);
    }

    #[test]
    fn small_suites_pass() {
        for suite in [Suite::Aggregators, Suite::ClippingLemma] {
            let r = verify_suite(suite, 300, 7).unwrap();
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn names_and_errors() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
        assert!(verify_suite(Suite::ClippingLemma, 0, 0).is_err());
    }
}
