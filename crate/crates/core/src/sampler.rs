//! Finite-shot model of the probe readout.
//!
//! The value to estimate is `A = k⟨Z⟩` with binary outcomes `±1`, so
//! `p₊ = (1 + A/k)/2`. The estimator is `Ã = k Z̄ₙ`, with variance
//! `(k² - A²)/n`.
//!
//! Draws are binomial counts from [`crate::SimRng`] seeded with
//! [`ShotPlan::seed`]; see [`crate::rng_from_seed`] for the stream
//! definition.

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::hadamard::{expectation, HadamardTestSpec};
use crate::{rng_from_seed, Error, Result};

/// Slack on `|A| ≤ k` so that exactly computed boundary values such as
/// `1 + 1e-16` are accepted and clamped.
pub const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotPlan {
    n: u64,
    seed: u64,
    k: f64,
}

impl ShotPlan {
    pub fn new(n: u64, seed: u64, k: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "shot count",
                reason: "must be at least 1".into(),
            });
        }
        check_scale(k)?;
        Ok(Self { n, seed, k })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotEstimate {
    /// `Ã = k Z̄ₙ`.
    pub estimate: f64,
    /// Unbiased estimate of `Var(Ã)`: `k² s²/n` with `s²` the per-shot
    /// sample variance. Zero when `n = 1`.
    pub sample_variance: f64,
    pub n: u64,
}

impl ShotEstimate {
    pub fn stderr(&self) -> f64 {
        self.sample_variance.sqrt()
    }
}

fn check_scale(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "scale factor k",
            reason: alloc::format!("{k} is outside (0, 1]"),
        });
    }
    Ok(())
}

fn check_range(a: f64, k: f64) -> Result<f64> {
    if !a.is_finite() || a.abs() > k + RANGE_TOL {
        return Err(Error::OutOfBernoulliRange { value: a, scale: k });
    }
    Ok(a.clamp(-k, k))
}

/// `p₊ = (1 + A/k)/2`.
pub fn p_plus(a: f64, k: f64) -> Result<f64> {
    check_scale(k)?;
    let a = check_range(a, k)?;
    Ok(((1.0 + a / k) / 2.0).clamp(0.0, 1.0))
}

/// `(k² - A²)/n`.
pub fn variance_predicted(a: f64, k: f64, n: u64) -> Result<f64> {
    check_scale(k)?;
    let a = check_range(a, k)?;
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "shot count",
            reason: "must be at least 1".into(),
        });
    }
    Ok((k * k - a * a) / n as f64)
}

/// Draws `n` binary outcomes and returns `Ã = k Z̄ₙ` with its sample
/// variance. Deterministic for a fixed plan.
pub fn sample_estimator(a: f64, plan: &ShotPlan) -> Result<ShotEstimate> {
    sample_with_rng(a, plan.k, plan.n, &mut rng_from_seed(plan.seed))
}

/// [`sample_estimator`] drawing from a caller-owned generator.
pub fn sample_with_rng(a: f64, k: f64, n: u64, rng: &mut impl Rng) -> Result<ShotEstimate> {
    let p = p_plus(a, k)?;
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "shot count",
            reason: "must be at least 1".into(),
        });
    }
    let plus = Binomial::new(n, p)
        .map_err(|_| Error::InvalidParameter {
            name: "probability",
            reason: alloc::format!("{p}"),
        })?
        .sample(rng);
    Ok(estimate_from_counts(plus, n, k))
}

/// Turns a count of `+1` outcomes out of `n` into the estimator.
pub fn estimate_from_counts(plus: u64, n: u64, k: f64) -> ShotEstimate {
    let nf = n as f64;
    let z_bar = (2.0 * plus as f64 - nf) / nf;
    let sample_variance = if n > 1 {
        let s2 = (nf / (nf - 1.0)) * (1.0 - z_bar * z_bar).max(0.0);
        k * k * s2 / nf
    } else {
        0.0
    };
    ShotEstimate {
        estimate: k * z_bar,
        sample_variance,
        n,
    }
}

/// Samples the probe of a Hadamard test whose exact value is `v`.
///
/// The probe is modelled as `⟨Z⟩ = v/k` and the returned estimate
/// targets `v`.
pub fn sample_hadamard(spec: &HadamardTestSpec, plan: &ShotPlan) -> Result<ShotEstimate> {
    let v = expectation(spec)?;
    sample_estimator(v, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::Quadrature;
    use crate::linalg::ComplexMatrix;
    use crate::qmodel::{basis_projector, mub_state, u_shift};
    use proptest::prelude::*;

    #[test]
    fn p_plus_examples() {
        assert_eq!(p_plus(0.0, 1.0).unwrap(), 0.5);
        assert_eq!(p_plus(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(p_plus(0.5, 0.5).unwrap(), 1.0);
        assert!(matches!(
            p_plus(0.6, 0.5),
            Err(Error::OutOfBernoulliRange { .. })
        ));
        assert!(p_plus(0.1, 0.0).is_err());
        assert!(p_plus(0.1, 1.5).is_err());
    }

    #[test]
    fn p_plus_round_trip() {
        for &(a, k) in &[(0.3, 1.0), (-0.2, 0.5), (0.1, 1.0 / 3.0), (-1.0, 1.0)] {
            let p = p_plus(a, k).unwrap();
            assert!((k * (2.0 * p - 1.0) - a).abs() < 1e-15);
        }
    }

    #[test]
    fn variance_examples() {
        assert!((variance_predicted(0.0, 1.0, 100).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(variance_predicted(1.0, 1.0, 7).unwrap(), 0.0);
        let shift = variance_predicted(0.1, 1.0, 1000).unwrap();
        let mub = variance_predicted(0.1, 1.0 / 3.0, 1000).unwrap();
        let expected = (1.0 / 9.0 - 0.01) / (1.0 - 0.01);
        assert!((mub / shift - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_bernoulli() {
        for n in [1, 10, 12345] {
            let est = sample_estimator(1.0, &ShotPlan::new(n, 9, 1.0).unwrap()).unwrap();
            assert_eq!(est.estimate, 1.0);
            assert_eq!(est.sample_variance, 0.0);
        }
    }

    #[test]
    fn zero_mean_million_shots() {
        let est = sample_estimator(0.0, &ShotPlan::new(1_000_000, 2024, 1.0).unwrap()).unwrap();
        assert!(est.estimate.abs() < 5e-3);
    }

    #[test]
    fn deterministic_per_seed() {
        let plan = ShotPlan::new(1000, 77, 0.5).unwrap();
        assert_eq!(
            sample_estimator(0.2, &plan).unwrap(),
            sample_estimator(0.2, &plan).unwrap()
        );
        assert_ne!(
            sample_estimator(0.2, &plan).unwrap(),
            sample_estimator(0.2, &plan.with_seed(78)).unwrap()
        );
    }

    #[test]
    fn mean_sample_variance_matches_law() {
        let n = 100_000;
        let seeds = 200;
        let mean_var: f64 = (0..seeds)
            .map(|s| {
                sample_estimator(0.6, &ShotPlan::new(n, s, 1.0).unwrap())
                    .unwrap()
                    .sample_variance
            })
            .sum::<f64>()
            / seeds as f64;
        let predicted = (1.0 - 0.36) / n as f64;
        assert!((mean_var / predicted - 1.0).abs() < 0.05);
    }

    #[test]
    fn shift_element_estimate() {
        let rho = ComplexMatrix::identity(3).scale_real(1.0 / 3.0);
        let spec = HadamardTestSpec::new(
            u_shift(3, 0),
            ComplexMatrix::identity(3),
            rho,
            basis_projector(3, 0).unwrap(),
            Quadrature::Real,
        )
        .unwrap();
        let est = sample_hadamard(&spec, &ShotPlan::new(100_000, 5, 1.0).unwrap()).unwrap();
        assert!((est.estimate - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn identity_spec_is_noiseless() {
        let id = ComplexMatrix::identity(2);
        let spec = HadamardTestSpec::new(
            id.clone(),
            id.clone(),
            id.scale_real(0.5),
            id,
            Quadrature::Real,
        )
        .unwrap();
        let est = sample_hadamard(&spec, &ShotPlan::new(500, 1, 1.0).unwrap()).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.sample_variance, 0.0);
    }

    #[test]
    fn mis_scaled_config_rejected() {
        let id = ComplexMatrix::identity(2);
        let spec = HadamardTestSpec::new(
            id.clone(),
            id.clone(),
            id.scale_real(0.5),
            id,
            Quadrature::Real,
        )
        .unwrap();
        let plan = ShotPlan::new(10, 1, 0.5).unwrap();
        assert!(matches!(
            sample_hadamard(&spec, &plan),
            Err(Error::OutOfBernoulliRange { .. })
        ));
    }

    #[test]
    fn mub_element_estimate_is_noisier_than_shift() {
        // Same element ρ00 of I/3, same shots per run. The MUB probe reads
        // ρ00/3 and the element estimate is three times the probe estimate.
        let d = 3;
        let rho = ComplexMatrix::identity(d).scale_real(1.0 / 3.0);
        let id = ComplexMatrix::identity(d);
        let shift = HadamardTestSpec::new(
            id.clone(),
            id.clone(),
            rho.clone(),
            basis_projector(d, 0).unwrap(),
            Quadrature::Real,
        )
        .unwrap();
        let p0 = basis_projector(d, 0).unwrap();
        let mub = HadamardTestSpec::new(
            p0.clone(),
            p0,
            rho,
            mub_state(d).projector(),
            Quadrature::Real,
        )
        .unwrap();
        let n = 2000;
        let runs = 400u64;
        let collect = |spec: &HadamardTestSpec, scale: f64| -> (f64, f64) {
            let xs: alloc::vec::Vec<f64> = (0..runs)
                .map(|s| {
                    scale
                        * sample_hadamard(spec, &ShotPlan::new(n, s, 1.0).unwrap())
                            .unwrap()
                            .estimate
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / runs as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
            (mean, var)
        };
        let (m_shift, v_shift) = collect(&shift, 1.0);
        let (m_mub, v_mub) = collect(&mub, d as f64);
        assert!((m_shift - 1.0 / 3.0).abs() < 0.01);
        assert!((m_mub - 1.0 / 3.0).abs() < 0.03);
        assert!(v_mub > 2.0 * v_shift, "{v_mub} vs {v_shift}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn p_plus_in_unit_interval(k in 0.01f64..=1.0, t in -1.0f64..=1.0) {
            let a = k * t;
            let p = p_plus(a, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((k * (2.0 * p - 1.0) - a).abs() < 1e-12);
        }

        #[test]
        fn estimate_within_scale(k in 0.01f64..=1.0, t in -1.0f64..=1.0, n in 1u64..5000, seed in any::<u64>()) {
            let est = sample_estimator(k * t, &ShotPlan::new(n, seed, k).unwrap()).unwrap();
            prop_assert!(est.estimate.abs() <= k + 1e-15);
            prop_assert!(est.sample_variance >= 0.0);
        }
    }
}
