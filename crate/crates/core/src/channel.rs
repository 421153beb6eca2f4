//! Symmetric two-arm channel with an untrusted Bell-state measurement.
//!
//! Gains use the standard coherent-state expressions for a polarization
//! BSM with four threshold detectors. Misalignment acts as a flip of the
//! sifted bit with probability `e_d`; [`crate::oracle`] checks the closed
//! forms against a direct quadrature over the relative phase.

use alloc::collections::BTreeMap;

use libm::{exp, expm1, log1p, pow, sqrt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::source::{pair_counts, PairSource, SourceSpec};
use crate::special::bessel_i0_minus_one;
use crate::{Error, Result};

/// Detector and fiber constants for one simulation point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelParams {
    pub p_d: f64,
    pub eta_d: f64,
    pub e_d: f64,
    pub e0: f64,
    pub f: f64,
    pub alpha_db_per_km: f64,
    pub distance_km: f64,
}

/// Named detector lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DeviceLine {
    A,
    B,
    C,
}

impl ChannelParams {
    pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

    pub fn line(line: DeviceLine, distance_km: f64) -> Self {
        let (p_d, eta_d, e_d) = match line {
            DeviceLine::A => (6.02e-6, 0.145, 0.015),
            DeviceLine::B => (1e-7, 0.40, 0.015),
            DeviceLine::C => (1e-7, 0.40, 0.01),
        };
        ChannelParams {
            p_d,
            eta_d,
            e_d,
            e0: 0.5,
            f: 1.16,
            alpha_db_per_km: Self::DEFAULT_ALPHA_DB_PER_KM,
            distance_km,
        }
    }

    pub fn at_distance(mut self, distance_km: f64) -> Self {
        self.distance_km = distance_km;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.p_d >= 0.0
            && self.p_d < 1.0
            && self.eta_d > 0.0
            && self.eta_d <= 1.0
            && self.e_d >= 0.0
            && self.e_d < 0.5
            && self.e0 == 0.5
            && self.f >= 1.0
            && self.alpha_db_per_km >= 0.0
            && self.distance_km >= 0.0
            && self.distance_km.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!(
                "invalid channel parameters: {self:?}"
            )))
        }
    }
}

/// Overall transmittance of one arm (fiber to the midpoint relay, then detector).
pub fn arm_transmittance(params: &ChannelParams) -> f64 {
    params.eta_d
        * pow(
            10.0,
            -params.alpha_db_per_km * (params.distance_km / 2.0) / 10.0,
        )
}

/// Gain and error gain of one pair source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    pub q: f64,
    pub eq: f64,
}

/// `1 - (1 - p_d) e^{-s}` without cancellation.
fn click_probability(p_d: f64, s: f64) -> f64 {
    -expm1(log1p(-p_d) - s)
}

/// X-basis gain for intensities `mu_a`, `mu_b` sent through arms `eta_a`, `eta_b`.
pub fn gain_x(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, params: &ChannelParams) -> Gain {
    let la = eta_a * mu_a;
    let lb = eta_b * mu_b;
    let mu_sum = la + lb;
    let x = 0.5 * sqrt(la * lb);
    let y = (1.0 - params.p_d) * exp(-mu_sum / 4.0);
    let one_minus_y = click_probability(params.p_d, mu_sum / 4.0);
    let u = bessel_i0_minus_one(x);
    let w = bessel_i0_minus_one(2.0 * x);
    // I0(2x) - 4 I0(x) + 3 expanded so that every term is non-negative:
    // 1 + 2y^2 - 4y I0(x) + I0(2x) = 2(1-y)^2 + 4u(1-y) + (w - 4u).
    let w_minus_4u = w_minus_four_u(x);
    let bracket = 2.0 * one_minus_y * one_minus_y + 4.0 * u * one_minus_y + w_minus_4u;
    let q = 2.0 * y * y * bracket;
    let eq = params.e0 * q - 2.0 * (params.e0 - params.e_d) * y * y * w;
    Gain {
        q,
        eq: eq.clamp(0.0, q),
    }
}

/// `(I0(2x) - 1) - 4 (I0(x) - 1)`, whose leading series term cancels exactly.
fn w_minus_four_u(x: f64) -> f64 {
    if x > 5.0 {
        return bessel_i0_minus_one(2.0 * x) - 4.0 * bessel_i0_minus_one(x);
    }
    // sum_{k>=2} (x^2)^k / (k!)^2 * (1 - 4^{1-k})
    let x2 = x * x;
    let mut term = x2; // (x^2)^k / (k!)^2 at k = 1
    let mut sum = 0.0;
    for k in 2..200 {
        let kf = k as f64;
        term *= x2 / (kf * kf);
        let contribution = term * (1.0 - pow(4.0, 1.0 - kf));
        sum += contribution;
        if contribution <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Z-basis gain: correct coincidences `Q_C` plus dark-driven ones `Q_E`.
pub fn gain_z(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, params: &ChannelParams) -> Gain {
    let la = eta_a * mu_a;
    let lb = eta_b * mu_b;
    let mu_sum = la + lb;
    let x = 0.5 * sqrt(la * lb);
    let pd = params.p_d;
    let keep = (1.0 - pd) * (1.0 - pd) * exp(-mu_sum / 2.0);
    let q_c = 2.0 * keep * click_probability(pd, la / 2.0) * click_probability(pd, lb / 2.0);
    // I0(2x) - (1-p_d) e^{-mu'/2} = (I0(2x) - 1) + (1 - (1-p_d) e^{-mu'/2})
    let q_e =
        2.0 * pd * keep * (bessel_i0_minus_one(2.0 * x) + click_probability(pd, mu_sum / 2.0));
    let q = q_c + q_e;
    Gain {
        q,
        eq: params.e_d * q_c + (1.0 - params.e_d) * q_e,
    }
}

/// X-basis yield of pairs with exactly one photon on each side.
///
/// Used as ground truth when checking the estimator's lower bound.
pub fn single_photon_pair_yield(eta_a: f64, eta_b: f64, params: &ChannelParams) -> f64 {
    let pd = params.p_d;
    (1.0 - pd)
        * (1.0 - pd)
        * (eta_a * eta_b / 2.0
            + (2.0 * eta_a + 2.0 * eta_b - 3.0 * eta_a * eta_b) * pd
            + 4.0 * (1.0 - eta_a) * (1.0 - eta_b) * pd * pd)
}

/// X-basis error rate of single-photon pairs (ground truth for the phase-flip bound).
pub fn single_photon_pair_error(eta_a: f64, eta_b: f64, params: &ChannelParams) -> f64 {
    let y11 = single_photon_pair_yield(eta_a, eta_b, params);
    let pd = params.p_d;
    let ey =
        params.e0 * y11 - (params.e0 - params.e_d) * (1.0 - pd) * (1.0 - pd) * eta_a * eta_b / 2.0;
    ey / y11
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SimulationMode {
    /// Detections equal their expectation `N Q` exactly.
    #[default]
    Expected,
    /// Detections drawn from binomial distributions with a seeded generator.
    Sampled,
}

/// Pulses, detections and error detections of one pair source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStats {
    pub pulses: u64,
    pub detections: f64,
    pub errors: f64,
}

impl SourceStats {
    /// Yield `S = k / N`.
    pub fn yield_rate(&self) -> f64 {
        self.detections / self.pulses as f64
    }

    /// Error yield `T = k_err / N`.
    pub fn error_yield(&self) -> f64 {
        self.errors / self.pulses as f64
    }

    /// Error rate `E = k_err / k` (zero without detections).
    pub fn error_rate(&self) -> f64 {
        if self.detections > 0.0 {
            self.errors / self.detections
        } else {
            0.0
        }
    }
}

/// Observed statistics per pair source.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservedStats {
    pub mode: SimulationMode,
    pub sources: BTreeMap<PairSource, SourceStats>,
}

impl ObservedStats {
    pub fn get(&self, source: PairSource) -> Result<&SourceStats> {
        self.sources
            .get(&source)
            .ok_or_else(|| Error::Config(alloc::format!("missing statistics for source {source}")))
    }

    /// Checks `0 <= k_err <= k <= N` for every source.
    pub fn validate(&self) -> Result<()> {
        for (source, s) in &self.sources {
            let ok = s.pulses > 0
                && s.errors.is_finite()
                && s.detections.is_finite()
                && s.errors >= 0.0
                && s.errors <= s.detections
                && s.detections <= s.pulses as f64;
            if !ok {
                return Err(Error::Config(alloc::format!(
                    "source {source}: require 0 <= k_err <= k <= N, got N={} k={} k_err={}",
                    s.pulses,
                    s.detections,
                    s.errors
                )));
            }
        }
        Ok(())
    }
}

/// Simulates the statistics of every pair source for `n_total` pulse pairs.
pub fn simulate_observed(
    spec: &SourceSpec,
    params: &ChannelParams,
    n_total: u64,
    mode: SimulationMode,
    seed: u64,
) -> Result<ObservedStats> {
    params.validate()?;
    let counts = pair_counts(spec, n_total)?;
    let eta = arm_transmittance(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources = BTreeMap::new();
    for (source, pulses) in counts.iter() {
        let (l, r) = source.sides();
        let (mu_a, mu_b) = (spec.intensity(l), spec.intensity(r));
        let gain = if source == PairSource::Zz {
            gain_z(mu_a, mu_b, eta, eta, params)
        } else {
            gain_x(mu_a, mu_b, eta, eta, params)
        };
        let stats = match mode {
            SimulationMode::Expected => SourceStats {
                pulses,
                detections: pulses as f64 * gain.q,
                errors: pulses as f64 * gain.eq,
            },
            SimulationMode::Sampled => {
                let k = Binomial::new(pulses, gain.q)
                    .map_err(|_| Error::Numeric("invalid binomial parameters"))?
                    .sample(&mut rng);
                let err_p = if gain.q > 0.0 {
                    (gain.eq / gain.q).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let k_err = Binomial::new(k, err_p)
                    .map_err(|_| Error::Numeric("invalid binomial parameters"))?
                    .sample(&mut rng);
                SourceStats {
                    pulses,
                    detections: k as f64,
                    errors: k_err as f64,
                }
            }
        };
        sources.insert(source, stats);
    }
    Ok(ObservedStats { mode, sources })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SourceSpec {
        SourceSpec::new(0.071, 0.212, 0.280, 0.357, 0.121, 0.479)
    }

    #[test]
    fn transmittance_examples() {
        let mut p = ChannelParams::line(DeviceLine::A, 0.0);
        assert_eq!(arm_transmittance(&p), 0.145);
        p = ChannelParams::line(DeviceLine::B, 50.0);
        assert!((arm_transmittance(&p) - 0.40 * pow(10.0, -0.5)).abs() < 1e-15);
        assert!((arm_transmittance(&p) - 0.126_491).abs() < 1e-6);
        p.eta_d = 1.0;
        p.alpha_db_per_km = 0.0;
        p.distance_km = 300.0;
        assert_eq!(arm_transmittance(&p), 1.0);
    }

    #[test]
    fn vacuum_gain_is_dark_coincidence() {
        let p = ChannelParams::line(DeviceLine::A, 40.0);
        let g = gain_x(0.0, 0.0, 0.1, 0.1, &p);
        let expect = 4.0 * p.p_d * p.p_d * (1.0 - p.p_d) * (1.0 - p.p_d);
        assert!((g.q / expect - 1.0).abs() < 1e-13);
        assert_eq!(g.eq, p.e0 * g.q);
    }

    #[test]
    fn one_sided_vacuum_has_random_errors() {
        let p = ChannelParams::line(DeviceLine::A, 10.0);
        let g = gain_x(0.3, 0.0, 0.1, 0.1, &p);
        assert!(g.q > 0.0);
        assert_eq!(g.eq, p.e0 * g.q);
    }

    #[test]
    fn z_gain_needs_both_sides_without_dark_counts() {
        let mut p = ChannelParams::line(DeviceLine::B, 20.0);
        p.p_d = 0.0;
        assert_eq!(gain_z(0.5, 0.0, 0.2, 0.2, &p).q, 0.0);
        p.e_d = 0.0;
        let g = gain_z(0.5, 0.4, 0.2, 0.2, &p);
        assert!(g.q > 0.0);
        assert_eq!(g.eq, 0.0);
    }

    #[test]
    fn gain_x_matches_naive_formula_at_moderate_intensity() {
        let p = ChannelParams::line(DeviceLine::A, 0.0);
        let (la, lb) = (0.4 * 0.5, 0.3 * 0.5);
        let g = gain_x(0.4, 0.3, 0.5, 0.5, &p);
        let x = 0.5 * sqrt(la * lb);
        let y = (1.0 - p.p_d) * exp(-(la + lb) / 4.0);
        let i0 = |z: f64| 1.0 + bessel_i0_minus_one(z);
        let q = 2.0 * y * y * (1.0 + 2.0 * y * y - 4.0 * y * i0(x) + i0(2.0 * x));
        assert!((g.q / q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn expected_mode_line_b_vacuum_yield() {
        let p = ChannelParams::line(DeviceLine::B, 0.0);
        let stats =
            simulate_observed(&spec(), &p, 10_000_000_000, SimulationMode::Expected, 0).unwrap();
        let s_oo = stats.get(PairSource::Oo).unwrap().yield_rate();
        let expect = 4e-14 * (1.0 - 1e-7) * (1.0 - 1e-7);
        assert!((s_oo / expect - 1.0).abs() < 1e-9);
        for source in PairSource::ALL.into_iter().filter(|s| s.involves_vacuum()) {
            let s = stats.get(source).unwrap();
            assert_eq!(s.error_yield() / s.yield_rate(), 0.5);
        }
        assert_eq!(stats.sources.len(), 8);
        stats.validate().unwrap();
    }

    #[test]
    fn sampled_mode_is_deterministic() {
        let p = ChannelParams::line(DeviceLine::A, 40.0);
        let a = simulate_observed(&spec(), &p, 1_000_000_000, SimulationMode::Sampled, 7).unwrap();
        let b = simulate_observed(&spec(), &p, 1_000_000_000, SimulationMode::Sampled, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let c = simulate_observed(&spec(), &p, 1_000_000_000, SimulationMode::Sampled, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validation_catches_error_excess() {
        let mut stats = ObservedStats::default();
        stats.sources.insert(
            PairSource::Xx,
            SourceStats {
                pulses: 10,
                detections: 2.0,
                errors: 3.0,
            },
        );
        assert!(stats.validate().is_err());
    }
}
