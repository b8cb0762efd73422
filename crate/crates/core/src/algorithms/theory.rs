//! Stepsize bounds and rate constants from the convergence theory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{prob_good_majority, prob_in_good_sample, to_f64, ParticipationConfig};

/// Which analysis the constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremVariant {
    /// General unbiased compressors, `lambda = 2 L |dx|`.
    Unbounded,
    /// Compressors with `|Q(x)| <= D_Q |x|`, `lambda = D_Q L |dx|`.
    BoundedCompressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Smoothness constant `L`.
    pub l: f64,
    pub omega: f64,
    /// Robustness constant `c` of the aggregator.
    pub c: f64,
    pub delta: f64,
    pub p: f64,
    pub p_g: f64,
    /// `P_{G_C}`.
    pub p_c: f64,
    /// `P_{G_Ĉ}`.
    pub p_chat: f64,
    pub good: usize,
    pub cohort: usize,
    pub refresh_cohort: usize,
    pub f_a: f64,
    pub d_q: f64,
    /// PŁ constant.
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub a: f64,
    pub d_hat: f64,
    /// `1 / (L (1 + sqrt A))`.
    pub gamma_max: f64,
    /// `1 / (L (1 + sqrt(2A)))`, the bound under the PŁ condition.
    pub gamma_max_pl: f64,
    /// Linear rate `rho` at `gamma_max_pl`.
    pub rho: f64,
    variant: TheoremVariant,
    p: f64,
    mu: f64,
}

impl TheoryConstants {
    /// `rho = min{gamma mu, p/8}` (unbounded) or `min{gamma mu, p/4}` (bounded compressor).
    pub fn rho_at(&self, gamma: f64) -> f64 {
        let cap = match self.variant {
            TheoremVariant::Unbounded => self.p / 8.0,
            TheoremVariant::BoundedCompressor => self.p / 4.0,
        };
        (gamma * self.mu).min(cap)
    }
}

/// Fills the probability entries of [`TheoryInputs`] from a participation setup.
pub fn theory_inputs(
    part: &ParticipationConfig,
    l: f64,
    omega: f64,
    d_q: f64,
    c: f64,
    f_a: f64,
    mu: f64,
) -> Result<TheoryInputs> {
    part.validate()?;
    let conditional = |cohort: usize| -> Result<f64> {
        match prob_in_good_sample(part.n, part.good, cohort, part.delta) {
            Ok(v) => Ok(to_f64(&v)),
            // the term is multiplied by p_G = 0
            Err(Error::ImpossibleCondition) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    Ok(TheoryInputs {
        l,
        omega,
        c,
        delta: part.delta,
        p: part.p,
        p_g: to_f64(&prob_good_majority(part.n, part.good, part.cohort, part.delta)?),
        p_c: conditional(part.cohort)?,
        p_chat: conditional(part.refresh_cohort)?,
        good: part.good,
        cohort: part.cohort,
        refresh_cohort: part.refresh_cohort,
        f_a,
        d_q,
        mu,
    })
}

pub fn theorem_constants(variant: TheoremVariant, t: &TheoryInputs) -> Result<TheoryConstants> {
    let nonneg = [t.l, t.omega, t.c, t.delta, t.p_g, t.p_c, t.p_chat, t.f_a, t.d_q, t.mu];
    if nonneg.iter().any(|v| !(*v >= 0.0)) || !(t.p > 0.0 && t.p <= 1.0) || t.delta >= 0.5 || t.l <= 0.0 {
        return Err(Error::InvalidConfig("theory inputs out of range".into()));
    }
    if t.cohort == 0 || t.refresh_cohort == 0 {
        return Err(Error::InvalidConfig("cohort sizes must be positive".into()));
    }
    let (g, c_size, chat) = (t.good as f64, t.cohort as f64, t.refresh_cohort as f64);
    let (p, delta, omega) = (t.p, t.delta, t.omega);
    let sampled = t.p_g * g * t.p_c / ((1.0 - delta) * c_size);
    let a = match variant {
        TheoremVariant::Unbounded => {
            32.0 * sampled / (p * p) * (30.0 * omega + 11.0) * (1.0 + 2.0 * t.c * delta)
                + 16.0 * (1.0 - t.p_g) * (1.0 + 4.0 * t.f_a * t.f_a) / (p * p)
        }
        TheoremVariant::BoundedCompressor => {
            4.0 * sampled / p
                * ((3.0 * omega + 2.0) / ((1.0 - delta) * c_size) + 8.0 * (5.0 * omega + 4.0) * t.c * delta / p)
                + 8.0 * (1.0 - t.p_g) * (2.0 + t.f_a * t.f_a * t.d_q * t.d_q) / (p * p)
        }
    };
    let d_hat = 2.0 * delta * t.p_chat / (1.0 - delta) * (6.0 * t.c * g / chat + p);
    let gamma_max = 1.0 / (t.l * (1.0 + a.sqrt()));
    let gamma_max_pl = 1.0 / (t.l * (1.0 + (2.0 * a).sqrt()));
    let mut out = TheoryConstants {
        a,
        d_hat,
        gamma_max,
        gamma_max_pl,
        rho: 0.0,
        variant,
        p,
        mu: t.mu,
    };
    out.rho = out.rho_at(gamma_max_pl);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TheoryInputs {
        TheoryInputs {
            l: 2.0,
            omega: 0.0,
            c: 1.0,
            delta: 0.25,
            p: 0.2,
            p_g: 1.0,
            p_c: 1.0,
            p_chat: 1.0,
            good: 20,
            cohort: 20,
            refresh_cohort: 20,
            f_a: 3.0,
            d_q: 1.0,
            mu: 0.02,
        }
    }

    #[test]
    fn full_participation_drops_sampling_term() {
        let t = base();
        let k = theorem_constants(TheoremVariant::Unbounded, &t).unwrap();
        // only the first term survives: 32 * 20 / (0.04 * 0.75 * 20) * 11 * 1.5
        let first = 32.0 * 20.0 / (0.04 * 0.75 * 20.0) * 11.0 * 1.5;
        assert!((k.a - first).abs() <= 1e-12 * first);
    }

    #[test]
    fn no_byzantine_fraction_no_heterogeneity_penalty() {
        let mut t = base();
        t.delta = 0.0;
        assert_eq!(theorem_constants(TheoremVariant::Unbounded, &t).unwrap().d_hat, 0.0);
        assert_eq!(theorem_constants(TheoremVariant::BoundedCompressor, &t).unwrap().d_hat, 0.0);
    }

    #[test]
    fn rates_and_stepsizes() {
        let t = base();
        let k = theorem_constants(TheoremVariant::Unbounded, &t).unwrap();
        assert!(k.gamma_max_pl < k.gamma_max);
        assert_eq!(k.rho, (k.gamma_max_pl * 0.02).min(0.2 / 8.0));
        let k2 = theorem_constants(TheoremVariant::BoundedCompressor, &t).unwrap();
        assert_eq!(k2.rho_at(100.0), 0.05);
        assert!(theorem_constants(TheoremVariant::Unbounded, &TheoryInputs { p: 0.0, ..t }).is_err());
    }

    #[test]
    fn inputs_from_participation() {
        let part = ParticipationConfig {
            n: 20,
            good: 15,
            cohort: 4,
            refresh_cohort: 20,
            p: 0.2,
            delta: 0.25,
        };
        let t = theory_inputs(&part, 1.0, 0.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        // (C(15,4) + 5 C(15,3)) / C(20,4) = 3640 / 4845
        assert!((t.p_g - 3640.0 / 4845.0).abs() < 1e-15);
        assert_eq!(t.p_chat, 1.0);
    }
}
