//! Confidence ranges for expected counts and failure-probability accounting.
//!
//! An observed count `k` is mapped to a range `[lower, upper]` for the
//! expected count. Three policies are supported: the normal approximation
//! `k ± γ√k`, Chernoff-bound inversion at failure probability `ε`, and the
//! asymptotic limit with zero-width ranges.

use alloc::string::String;
use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

use crate::special::{inverse_normal_upper_tail, normal_upper_tail};
use crate::{Error, Result};

const MAX_BISECTION_STEPS: usize = 200;
const BISECTION_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluctuationPolicy {
    /// `k ± γ√k`; `epsilon` is the one-sided failure probability booked per bound.
    Normal { gamma: f64, epsilon: f64 },
    /// Chernoff tails inverted at one-sided failure probability `epsilon`.
    Chernoff { epsilon: f64 },
    /// No fluctuation (infinite data).
    Exact,
}

impl FluctuationPolicy {
    /// Normal policy whose booked failure probability is the normal upper tail at `gamma`.
    pub fn normal(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Domain("gamma must be positive"));
        }
        Ok(FluctuationPolicy::Normal {
            gamma,
            epsilon: normal_upper_tail(gamma),
        })
    }

    /// Normal policy with an explicitly booked failure probability (e.g. γ = 5.3 at ε = 1e-7).
    pub fn normal_with_epsilon(gamma: f64, epsilon: f64) -> Result<Self> {
        Self::normal(gamma)?;
        check_epsilon(epsilon)?;
        Ok(FluctuationPolicy::Normal { gamma, epsilon })
    }

    /// Normal policy with `gamma` chosen so that the one-sided tail equals `epsilon`.
    pub fn normal_for_epsilon(epsilon: f64) -> Result<Self> {
        let gamma = gamma_for_epsilon(epsilon)?;
        Ok(FluctuationPolicy::Normal { gamma, epsilon })
    }

    pub fn chernoff(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(FluctuationPolicy::Chernoff { epsilon })
    }

    /// The reference setting: γ = 5.3 booked at ε = 1e-7.
    pub fn reference_normal() -> Self {
        FluctuationPolicy::Normal {
            gamma: 5.3,
            epsilon: 1e-7,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            FluctuationPolicy::Normal { epsilon, .. } | FluctuationPolicy::Chernoff { epsilon } => {
                epsilon
            }
            FluctuationPolicy::Exact => 0.0,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, FluctuationPolicy::Exact)
    }

    /// Symmetric deviation of a count: `γ√k` for the normal policy, the wider
    /// side of the Chernoff range otherwise.
    pub fn deviation(&self, count: f64) -> Result<f64> {
        match *self {
            FluctuationPolicy::Normal { gamma, .. } if count > 0.0 => Ok(gamma * sqrt(count)),
            FluctuationPolicy::Exact => Ok(0.0),
            _ => {
                let (lo, hi) = mean_range(count, *self)?;
                Ok((hi - count).max(count - lo))
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain("failure probability must lie in (0, 1)"))
    }
}

/// Range for the expectation of an observed count.
pub fn mean_range(count: f64, policy: FluctuationPolicy) -> Result<(f64, f64)> {
    if !(count >= 0.0) || !count.is_finite() {
        return Err(Error::Domain("count must be finite and non-negative"));
    }
    match policy {
        FluctuationPolicy::Exact => Ok((count, count)),
        FluctuationPolicy::Normal { gamma, epsilon } => {
            if count == 0.0 {
                // A zero-width range is meaningless here; use the exact
                // zero-count Poisson tail instead.
                return Ok((0.0, log(1.0 / epsilon)));
            }
            let dev = gamma * sqrt(count);
            Ok(((count - dev).max(0.0), count + dev))
        }
        FluctuationPolicy::Chernoff { epsilon } => {
            let target = log(1.0 / epsilon);
            if count == 0.0 {
                // P[X = 0] = e^{-m} for a Poisson count.
                return Ok((0.0, target));
            }
            Ok((
                chernoff_lower(count, target)?,
                chernoff_upper(count, target)?,
            ))
        }
    }
}

/// Largest `m <= k` with `exp(-δ²m/(2+δ)) = ε` where `k = (1+δ)m`.
fn chernoff_lower(k: f64, target: f64) -> Result<f64> {
    let exponent = |m: f64| {
        if m <= 0.0 {
            return k;
        }
        let delta = k / m - 1.0;
        delta * delta * m / (2.0 + delta)
    };
    if exponent(0.0) <= target {
        return Ok(0.0);
    }
    // exponent decreases from k at m = 0 to 0 at m = k.
    bisect(0.0, k, |m| exponent(m) - target, false)
}

/// Smallest `m >= k` with `exp(-δ²m/2) = ε` where `k = (1-δ)m`.
fn chernoff_upper(k: f64, target: f64) -> Result<f64> {
    let exponent = |m: f64| {
        let delta = 1.0 - k / m;
        delta * delta * m / 2.0
    };
    let mut hi = k + target + 1.0;
    let mut steps = 0;
    while exponent(hi) < target {
        hi = k + 2.0 * (hi - k);
        steps += 1;
        if steps > MAX_BISECTION_STEPS {
            return Err(Error::Numeric("Chernoff upper bound bracket did not close"));
        }
    }
    bisect(k, hi, |m| exponent(m) - target, true)
}

/// Root of a monotone function on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, increasing: bool) -> Result<f64> {
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_RTOL * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let above = f(mid) > 0.0;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Numeric(
        "bisection did not converge within 200 iterations",
    ))
}

/// One-sided normal quantile: `γ` with `P[Z > γ] = ε`.
pub fn gamma_for_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain("epsilon must lie in (0, 0.5)"));
    }
    Ok(inverse_normal_upper_tail(epsilon))
}

/// One booked one-sided bound.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedgerEntry {
    pub bound: String,
    pub epsilon: f64,
}

/// Every one-sided bound used in an evaluation, with its failure probability.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailureLedger {
    pub entries: Vec<LedgerEntry>,
}

impl FailureLedger {
    pub fn record(&mut self, bound: impl Into<String>, epsilon: f64) {
        self.entries.push(LedgerEntry {
            bound: bound.into(),
            epsilon,
        });
    }

    /// Union-bound total failure probability.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of [`coverage_trial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageReport {
    pub trials: u64,
    /// Trials where the expectation fell below the lower end of the range.
    pub lower_violations: u64,
    /// Trials where the expectation exceeded the upper end.
    pub upper_violations: u64,
}

impl CoverageReport {
    pub fn lower_rate(&self) -> f64 {
        self.lower_violations as f64 / self.trials as f64
    }

    pub fn upper_rate(&self) -> f64 {
        self.upper_violations as f64 / self.trials as f64
    }

    /// The worse of the two one-sided violation frequencies.
    pub fn max_one_sided_rate(&self) -> f64 {
        self.lower_rate().max(self.upper_rate())
    }

    pub fn two_sided_rate(&self) -> f64 {
        (self.lower_violations + self.upper_violations) as f64 / self.trials as f64
    }
}

/// Monte Carlo check of the range policy on a random subset of an i.i.d. population.
///
/// Each trial draws a population of `n_population` Bernoulli(`true_rate`)
/// outcomes and a uniformly random subset of `n_subset` of them. The subset
/// count `k` is observed; the quantity being bracketed is the subset size
/// times the population's empirical rate.
pub fn coverage_trial(
    n_population: u64,
    n_subset: u64,
    true_rate: f64,
    policy: FluctuationPolicy,
    trials: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if n_subset > n_population || n_population == 0 || trials == 0 {
        return Err(Error::Domain(
            "require 0 < n_subset <= n_population and trials > 0",
        ));
    }
    let population = Binomial::new(n_population, true_rate)
        .map_err(|_| Error::Domain("true rate must lie in [0, 1]"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoverageReport {
        trials,
        lower_violations: 0,
        upper_violations: 0,
    };
    for _ in 0..trials {
        let successes = population.sample(&mut rng);
        let subset = Hypergeometric::new(n_population, successes, n_subset)
            .map_err(|_| Error::Numeric("invalid hypergeometric parameters"))?;
        let k = subset.sample(&mut rng) as f64;
        let expectation = n_subset as f64 * successes as f64 / n_population as f64;
        let (lo, hi) = mean_range(k, policy)?;
        if expectation < lo {
            report.lower_violations += 1;
        } else if expectation > hi {
            report.upper_violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form roots of the two Chernoff exponents.
    fn chernoff_closed_form(k: f64, eps: f64) -> (f64, f64) {
        let l = log(1.0 / eps);
        let upper = k + l + sqrt(l * l + 2.0 * k * l);
        let lower = (k + l / 2.0 - sqrt(l * l / 4.0 + 2.0 * k * l)).max(0.0);
        (lower, upper)
    }

    #[test]
    fn zero_count_chernoff_uses_poisson_tail() {
        let (lo, hi) = mean_range(0.0, FluctuationPolicy::Chernoff { epsilon: 1e-10 }).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 23.025_850_929_940_457).abs() < 1e-9);
        // e^{-hi} is the probability a Poisson(hi) count is zero.
        assert!((libm::exp(-hi) / 1e-10 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_range_is_degenerate() {
        assert_eq!(
            mean_range(17.5, FluctuationPolicy::Exact).unwrap(),
            (17.5, 17.5)
        );
    }

    #[test]
    fn normal_range_example() {
        let p = FluctuationPolicy::normal(5.3).unwrap();
        assert_eq!(mean_range(1e6, p).unwrap(), (1e6 - 5300.0, 1e6 + 5300.0));
    }

    #[test]
    fn chernoff_bisection_matches_closed_form() {
        for &eps in &[1e-10, 1e-7, 0.01] {
            let policy = FluctuationPolicy::Chernoff { epsilon: eps };
            for &k in &[0.5, 3.0, 25.0, 100.0, 1e4, 1e8] {
                let (lo, hi) = mean_range(k, policy).unwrap();
                let (elo, ehi) = chernoff_closed_form(k, eps);
                assert!((hi - ehi).abs() <= 1e-10 * ehi, "k={k} eps={eps}");
                assert!((lo - elo).abs() <= 1e-10 * k, "k={k} eps={eps}");
            }
        }
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_for_epsilon(1e-7).unwrap() - 5.199).abs() < 1e-3);
        assert!((gamma_for_epsilon(0.1587).unwrap() - 1.0).abs() < 1e-3);
        assert!(gamma_for_epsilon(0.7).is_err());
        assert!(gamma_for_epsilon(0.0).is_err());
    }

    #[test]
    fn gamma_matches_erfc_bisection() {
        let eps = 1e-10;
        let (mut lo, mut hi) = (0.0f64, 20.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 0.5 * libm::erfc(mid / core::f64::consts::SQRT_2) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = gamma_for_epsilon(eps).unwrap();
        assert!((g - lo).abs() < 1e-6);
        assert!((g - 6.361).abs() < 1e-3);
    }

    #[test]
    fn ledger_sums_entries() {
        let mut ledger = FailureLedger::default();
        ledger.record("a", 1e-7);
        ledger.record("b", 2e-7);
        assert_eq!(ledger.len(), 2);
        assert!((ledger.total() - 3e-7).abs() < 1e-22);
    }

    #[test]
    fn exact_policy_coverage_fails_on_noisy_data() {
        let r = coverage_trial(100_000, 10_000, 0.01, FluctuationPolicy::Exact, 500, 1).unwrap();
        assert!(r.two_sided_rate() > 0.9);
    }

    #[test]
    fn negative_count_is_rejected() {
        assert!(mean_range(-1.0, FluctuationPolicy::Exact).is_err());
    }
}
