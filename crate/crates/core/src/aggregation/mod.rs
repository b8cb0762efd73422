//! Robust aggregation rules, bucketing, and their boundedness constants.

mod rules;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{mean, permutation, squared_distance_mean, RealVector};

pub const GM_DEFAULT_MAX_ITERS: usize = 100;
pub const GM_DEFAULT_TOL: f64 = 1e-10;
pub const GM_DEFAULT_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    Mean,
    CoordinateMedian,
    GeometricMedian {
        #[serde(default = "gm_max_iters")]
        max_iters: usize,
        #[serde(default = "gm_tol")]
        tol: f64,
        #[serde(default = "gm_smoothing")]
        smoothing: f64,
    },
    /// `assumed_byzantine` defaults to `ceil(delta * m)` for `m` inputs.
    Krum {
        #[serde(default)]
        assumed_byzantine: Option<usize>,
        #[serde(default)]
        delta: f64,
    },
    TrimmedMean { trim: f64 },
}

fn gm_max_iters() -> usize {
    GM_DEFAULT_MAX_ITERS
}

fn gm_tol() -> f64 {
    GM_DEFAULT_TOL
}

fn gm_smoothing() -> f64 {
    GM_DEFAULT_SMOOTHING
}

impl Rule {
    pub fn geometric_median() -> Self {
        Rule::GeometricMedian {
            max_iters: GM_DEFAULT_MAX_ITERS,
            tol: GM_DEFAULT_TOL,
            smoothing: GM_DEFAULT_SMOOTHING,
        }
    }
}

/// A base rule, optionally preceded by bucketing with bucket size `bucket_size`.
/// Unknown keys are not rejected here (serde cannot combine that with
/// `flatten`); config loading checks them separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    #[serde(flatten)]
    pub rule: Rule,
    #[serde(default)]
    pub bucket_size: Option<usize>,
}

impl AggregatorSpec {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            bucket_size: None,
        }
    }

    pub fn with_bucketing(rule: Rule, bucket_size: usize) -> Self {
        Self {
            rule,
            bucket_size: Some(bucket_size),
        }
    }

    /// Robust federated averaging: geometric median after bucketing.
    pub fn rfa(bucket_size: usize) -> Self {
        Self::with_bucketing(Rule::geometric_median(), bucket_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bucket_size == Some(0) {
            return Err(Error::InvalidConfig("bucket size must be >= 1".into()));
        }
        match self.rule {
            Rule::TrimmedMean { trim } if !(0.0..0.5).contains(&trim) => Err(Error::InvalidConfig(
                format!("trim fraction must lie in [0, 1/2), got {trim}"),
            )),
            Rule::GeometricMedian { tol, smoothing, .. } if tol < 0.0 || smoothing < 0.0 => Err(
                Error::InvalidConfig("geometric median tolerances must be >= 0".into()),
            ),
            Rule::Krum { delta, .. } if !(0.0..0.5).contains(&delta) => Err(Error::InvalidConfig(
                format!("krum delta must lie in [0, 1/2), got {delta}"),
            )),
            _ => Ok(()),
        }
    }

    /// Aggregates `inputs`; `rng` is consumed only by bucketing.
    pub fn aggregate<R: RngCore + ?Sized>(&self, inputs: &[RealVector], rng: &mut R) -> Result<RealVector> {
        self.validate()?;
        let first = inputs.first().ok_or(Error::EmptyInput)?;
        for v in inputs {
            check_dim(first.dim(), v.dim())?;
        }
        match self.bucket_size {
            Some(s) if s > 1 => {
                let buckets = bucketing(inputs, s, rng)?;
                apply_rule(&self.rule, &buckets)
            }
            _ => apply_rule(&self.rule, inputs),
        }
    }

    /// Constant `F_A` with `|A(x_1..x_m)| <= F_A max_i |x_i|`; bucketing does not change it.
    pub fn f_a_constant(&self, dim: usize) -> AggregatorBoundInfo {
        let f_a = match self.rule {
            Rule::CoordinateMedian => (dim as f64).sqrt(),
            Rule::Mean | Rule::GeometricMedian { .. } | Rule::Krum { .. } | Rule::TrimmedMean { .. } => 1.0,
        };
        AggregatorBoundInfo { f_a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorBoundInfo {
    pub f_a: f64,
}

fn apply_rule(rule: &Rule, inputs: &[RealVector]) -> Result<RealVector> {
    match *rule {
        Rule::Mean => mean(inputs),
        Rule::CoordinateMedian => Ok(rules::coordinate_median(inputs)),
        Rule::TrimmedMean { trim } => Ok(rules::trimmed_mean(inputs, trim)),
        Rule::GeometricMedian {
            max_iters,
            tol,
            smoothing,
        } => rules::geometric_median(inputs, max_iters, tol, smoothing),
        Rule::Krum {
            assumed_byzantine,
            delta,
        } => {
            let b = assumed_byzantine.unwrap_or_else(|| (delta * inputs.len() as f64).ceil() as usize);
            rules::krum(inputs, b)
        }
    }
}

/// Means of consecutive groups of `s` inputs after a uniformly random permutation.
/// Returns `ceil(m/s)` vectors; the last group may be smaller.
pub fn bucketing<R: RngCore + ?Sized>(inputs: &[RealVector], s: usize, rng: &mut R) -> Result<Vec<RealVector>> {
    bucketing_with_permutation(inputs, s, rng).map(|(buckets, _)| buckets)
}

/// As [`bucketing`], also returning the permutation that was drawn.
pub fn bucketing_with_permutation<R: RngCore + ?Sized>(
    inputs: &[RealVector],
    s: usize,
    rng: &mut R,
) -> Result<(Vec<RealVector>, Vec<usize>)> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if s == 0 {
        return Err(Error::InvalidConfig("bucket size must be >= 1".into()));
    }
    let perm = permutation(rng, inputs.len());
    let buckets = perm
        .chunks(s)
        .map(|chunk| {
            let group: Vec<RealVector> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            mean(&group)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((buckets, perm))
}

/// Monte-Carlo estimate of the robust-aggregation error relative to `delta sigma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaggReport {
    pub trials: usize,
    /// Mean of `|x_hat - x_bar|^2`.
    pub mean_error: f64,
    /// Mean pairwise variance of the good inputs.
    pub sigma_sq: f64,
    /// Mean Byzantine fraction.
    pub delta: f64,
    /// `mean_error / (delta sigma^2)`; `None` when the denominator vanishes.
    pub implied_c: Option<f64>,
    /// Byzantine inputs present while the good inputs have zero spread.
    pub degenerate: bool,
}

/// One draw of aggregator inputs with a flag per input marking good ones.
pub struct LabelledInputs {
    pub inputs: Vec<RealVector>,
    pub good: Vec<bool>,
}

pub fn empirical_ragg_check<R, G>(spec: &AggregatorSpec, mut generator: G, trials: usize, rng: &mut R) -> Result<RaggReport>
where
    R: RngCore + ?Sized,
    G: FnMut(&mut R) -> LabelledInputs,
{
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let mut err_sum = 0.0;
    let mut sigma_sum = 0.0;
    let mut delta_sum = 0.0;
    let mut any_byzantine = false;
    for _ in 0..trials {
        let draw = generator(rng);
        if draw.inputs.len() != draw.good.len() {
            return Err(Error::InvalidConfig("generator returned mismatched flags".into()));
        }
        let goods: Vec<RealVector> = draw
            .inputs
            .iter()
            .zip(&draw.good)
            .filter(|(_, &g)| g)
            .map(|(v, _)| v.clone())
            .collect();
        let good_mean = mean(&goods)?;
        let byz = draw.good.iter().filter(|&&g| !g).count();
        any_byzantine |= byz > 0;
        let out = spec.aggregate(&draw.inputs, rng)?;
        err_sum += out.distance_sq(&good_mean);
        sigma_sum += if goods.len() >= 2 { squared_distance_mean(&goods)? } else { 0.0 };
        delta_sum += byz as f64 / draw.inputs.len() as f64;
    }
    let t = trials as f64;
    let mean_error = err_sum / t;
    let sigma_sq = sigma_sum / t;
    let delta = delta_sum / t;
    let denom = delta * sigma_sq;
    let implied_c = if denom > 0.0 {
        Some(mean_error / denom)
    } else if mean_error == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(RaggReport {
        trials,
        mean_error,
        sigma_sq,
        delta,
        implied_c,
        degenerate: any_byzantine && sigma_sq == 0.0,
    })
}
