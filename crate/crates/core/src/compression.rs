//! Unbiased compression operators and their constants.
//!
//! | kind           | omega        | expected density | D_Q     |
//! |----------------|--------------|------------------|---------|
//! | Identity       | 0            | d                | 1       |
//! | RandK          | d/K - 1      | K                | d/K     |
//! | L2Quantization | sqrt(d) - 1  | <= sqrt(d)       | sqrt(d) |

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_without_replacement, RealVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorKind {
    Identity,
    /// Keep `k` uniformly chosen coordinates, scaled by `d/k`.
    RandK { k: usize },
    /// One-level l2 quantisation: `|x| sign(x_i)` with probability `|x_i|/|x|`, else 0.
    L2Quantization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorSpec {
    kind: CompressorKind,
    dim: usize,
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("compressor dimension must be positive".into()));
        }
        if let CompressorKind::RandK { k } = kind {
            if k == 0 || k > dim {
                return Err(Error::InvalidConfig(format!(
                    "RandK needs 1 <= K <= d, got K = {k}, d = {dim}"
                )));
            }
        }
        Ok(Self { kind, dim })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kind: CompressorKind::Identity,
            dim,
        }
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn compress<R: RngCore + ?Sized>(&self, x: &RealVector, rng: &mut R) -> Result<RealVector> {
        crate::error::check_dim(self.dim, x.dim())?;
        Ok(match self.kind {
            CompressorKind::Identity => x.clone(),
            CompressorKind::RandK { k } => {
                let mut out = RealVector::zeros(self.dim);
                let scale = self.dim as f64 / k as f64;
                for i in sample_without_replacement(rng, self.dim, k) {
                    out[i] = scale * x[i];
                }
                out
            }
            CompressorKind::L2Quantization => {
                let norm = x.norm();
                let mut out = RealVector::zeros(self.dim);
                if norm == 0.0 {
                    return Ok(out);
                }
                for i in 0..self.dim {
                    // one uniform per coordinate, drawn even for zero entries
                    let u: f64 = rng.random();
                    if u < x[i].abs() / norm {
                        out[i] = norm * x[i].signum();
                    }
                }
                out
            }
        })
    }

    /// Variance parameter: `E|Q(x) - x|^2 <= omega |x|^2`.
    pub fn omega(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 0.0,
            CompressorKind::RandK { k } => self.dim as f64 / k as f64 - 1.0,
            CompressorKind::L2Quantization => (self.dim as f64).sqrt() - 1.0,
        }
    }

    /// Deterministic norm inflation bound: `|Q(x)| <= D_Q |x|`.
    pub fn dq_bound(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 1.0,
            CompressorKind::RandK { k } => self.dim as f64 / k as f64,
            CompressorKind::L2Quantization => (self.dim as f64).sqrt(),
        }
    }

    /// `sup_x E|Q(x)|_0`.
    pub fn expected_density(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => self.dim as f64,
            CompressorKind::RandK { k } => k as f64,
            CompressorKind::L2Quantization => (self.dim as f64).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Lane, Purpose, RngStream};
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, Lane::server(0, Purpose::Verify))
    }

    fn gaussian(rng: &mut RngStream, d: usize) -> RealVector {
        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>().into()
    }

    #[test]
    fn constants() {
        let randk = CompressorSpec::new(CompressorKind::RandK { k: 1 }, 100).unwrap();
        assert_eq!(randk.omega(), 99.0);
        assert_eq!(randk.dq_bound(), 100.0);
        let randk7 = CompressorSpec::new(CompressorKind::RandK { k: 7 }, 100).unwrap();
        assert_eq!(randk7.expected_density(), 7.0);
        let id = CompressorSpec::identity(5);
        assert_eq!(id.omega(), 0.0);
        assert_eq!(id.dq_bound(), 1.0);
        assert_eq!(id.expected_density(), 5.0);
        let q = CompressorSpec::new(CompressorKind::L2Quantization, 4).unwrap();
        assert_eq!(q.omega(), 1.0);
        assert_eq!(q.dq_bound(), 2.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(CompressorSpec::new(CompressorKind::RandK { k: 0 }, 4).is_err());
        assert!(CompressorSpec::new(CompressorKind::RandK { k: 5 }, 4).is_err());
        assert!(CompressorSpec::new(CompressorKind::Identity, 0).is_err());
    }

    #[test]
    fn identity_passes_through() {
        let x = RealVector::from([1.0, -2.0, 3.0]);
        assert_eq!(CompressorSpec::identity(3).compress(&x, &mut rng(0)).unwrap(), x);
    }

    #[test]
    fn randk_two_outcomes() {
        let spec = CompressorSpec::new(CompressorKind::RandK { k: 1 }, 2).unwrap();
        let x = RealVector::from([2.0, 0.0]);
        let mut r = rng(1);
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let y = spec.compress(&x, &mut r).unwrap();
            if y[0] == 4.0 {
                hits += 1;
            } else {
                assert_eq!(y.as_slice(), &[0.0, 0.0]);
            }
        }
        let freq = hits as f64 / n as f64;
        // binomial(1e5, 1/2): sd = 0.00158
        assert!((freq - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn randk_support_is_exactly_k() {
        let spec = CompressorSpec::new(CompressorKind::RandK { k: 3 }, 10).unwrap();
        let mut r = rng(2);
        let x = RealVector::from(vec![1.5; 10]);
        for _ in 0..1000 {
            assert_eq!(spec.compress(&x, &mut r).unwrap().nnz(), 3);
        }
    }

    #[test]
    fn l2_quantization_first_coordinate_probability() {
        let spec = CompressorSpec::new(CompressorKind::L2Quantization, 2).unwrap();
        let x = RealVector::from([3.0, 4.0]);
        let mut r = rng(3);
        let n = 100_000;
        let mut mean = RealVector::zeros(2);
        let mut first_hits = 0usize;
        for _ in 0..n {
            let y = spec.compress(&x, &mut r).unwrap();
            assert!(y[0] == 0.0 || y[0] == 5.0);
            assert!(y[1] == 0.0 || y[1] == 5.0);
            first_hits += usize::from(y[0] == 5.0);
            mean.add_assign(&y);
        }
        mean.scale(1.0 / n as f64);
        let p = first_hits as f64 / n as f64;
        assert!((p - 0.6).abs() < 5.0 * (0.24f64 / n as f64).sqrt());
        assert!(mean.distance(&x) / x.norm() < 0.01);
    }

    #[test]
    fn zero_maps_to_zero() {
        let mut r = rng(4);
        for kind in [
            CompressorKind::Identity,
            CompressorKind::RandK { k: 2 },
            CompressorKind::L2Quantization,
        ] {
            let spec = CompressorSpec::new(kind, 5).unwrap();
            assert!(spec.compress(&RealVector::zeros(5), &mut r).unwrap().is_zero());
        }
    }

    #[test]
    fn hard_norm_bound_fuzz() {
        let mut r = rng(5);
        for kind in [CompressorKind::RandK { k: 3 }, CompressorKind::L2Quantization] {
            let spec = CompressorSpec::new(kind, 9).unwrap();
            for _ in 0..10_000 {
                let x = gaussian(&mut r, 9);
                let y = spec.compress(&x, &mut r).unwrap();
                assert!(y.norm() <= spec.dq_bound() * x.norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn unbiased_within_three_standard_errors() {
        let n = 100_000usize;
        let mut r = rng(6);
        for kind in [CompressorKind::RandK { k: 2 }, CompressorKind::L2Quantization] {
            let spec = CompressorSpec::new(kind, 6).unwrap();
            let x = gaussian(&mut r, 6);
            let mut sum = [0.0; 6];
            let mut sum_sq = [0.0; 6];
            for _ in 0..n {
                let y = spec.compress(&x, &mut r).unwrap();
                for i in 0..6 {
                    sum[i] += y[i];
                    sum_sq[i] += y[i] * y[i];
                }
            }
            for i in 0..6 {
                let m = sum[i] / n as f64;
                let var = sum_sq[i] / n as f64 - m * m;
                let se = (var / n as f64).sqrt();
                // 3 sigma per coordinate, with a little slack for 12 simultaneous checks
                assert!((m - x[i]).abs() <= 3.5 * se + 1e-12, "{kind:?} coord {i}: {m} vs {}", x[i]);
            }
        }
    }

    #[test]
    fn l2_quantization_density_at_most_sqrt_d() {
        let spec = CompressorSpec::new(CompressorKind::L2Quantization, 16).unwrap();
        let mut r = rng(7);
        for _ in 0..20 {
            let x = gaussian(&mut r, 16);
            // E|Q(x)|_0 = |x|_1 / |x| exactly
            let expected = x.iter().map(|v| v.abs()).sum::<f64>() / x.norm();
            assert!(expected <= spec.expected_density() + 1e-12);
            let draws = 20_000;
            let avg = (0..draws)
                .map(|_| spec.compress(&x, &mut r).unwrap().nnz() as f64)
                .sum::<f64>()
                / draws as f64;
            assert!((avg - expected).abs() < 0.1, "{avg} vs {expected}");
        }
    }
}
