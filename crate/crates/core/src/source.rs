//! The 4-intensity source configuration and photon-number bookkeeping.
//!
//! Each side independently picks vacuum `o`, decoys `x`/`y` (X basis) or the
//! signal `z` (Z basis). Alice and Bob use identical settings, so a single
//! [`SourceSpec`] describes both.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use libm::{exp, round};

use crate::{Error, Result};

/// Photon-number cutoff used when none is given.
pub const DEFAULT_CUTOFF: usize = 20;

/// Protocol parameters shared by both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceSpec {
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_cutoff"))]
    pub cutoff: usize,
}

#[cfg(feature = "serde")]
fn default_cutoff() -> usize {
    DEFAULT_CUTOFF
}

impl SourceSpec {
    pub fn new(mu_x: f64, mu_y: f64, mu_z: f64, p_x: f64, p_y: f64, p_z: f64) -> Self {
        SourceSpec {
            mu_x,
            mu_y,
            mu_z,
            p_x,
            p_y,
            p_z,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    /// Vacuum selection probability `1 - p_x - p_y - p_z`.
    pub fn p_o(&self) -> f64 {
        1.0 - self.p_x - self.p_y - self.p_z
    }

    pub fn intensity(&self, side: Intensity) -> f64 {
        match side {
            Intensity::O => 0.0,
            Intensity::X => self.mu_x,
            Intensity::Y => self.mu_y,
            Intensity::Z => self.mu_z,
        }
    }

    pub fn probability(&self, side: Intensity) -> f64 {
        match side {
            // Tiny negative round-off in 1 - sum is reported as zero here;
            // validate_spec still rejects genuinely negative values.
            Intensity::O => self.p_o().max(0.0),
            Intensity::X => self.p_x,
            Intensity::Y => self.p_y,
            Intensity::Z => self.p_z,
        }
    }

    pub fn distribution(&self, side: Intensity) -> Result<PhotonDistribution> {
        poisson_coefficients(self.intensity(side), self.cutoff)
    }
}

/// One side's source choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intensity {
    O,
    X,
    Y,
    Z,
}

/// A two-pulse source `lr`: Alice uses `l`, Bob uses `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PairSource {
    Oo,
    Ox,
    Xo,
    Oy,
    Yo,
    Xx,
    Yy,
    Zz,
}

impl PairSource {
    /// Every pair source the protocol keeps statistics for.
    pub const ALL: [PairSource; 8] = [
        PairSource::Oo,
        PairSource::Ox,
        PairSource::Xo,
        PairSource::Oy,
        PairSource::Yo,
        PairSource::Xx,
        PairSource::Yy,
        PairSource::Zz,
    ];

    /// The decoy set used for parameter estimation (everything except `zz`).
    pub const DECOY: [PairSource; 7] = [
        PairSource::Oo,
        PairSource::Ox,
        PairSource::Xo,
        PairSource::Oy,
        PairSource::Yo,
        PairSource::Xx,
        PairSource::Yy,
    ];

    pub fn sides(self) -> (Intensity, Intensity) {
        use Intensity::*;
        match self {
            PairSource::Oo => (O, O),
            PairSource::Ox => (O, X),
            PairSource::Xo => (X, O),
            PairSource::Oy => (O, Y),
            PairSource::Yo => (Y, O),
            PairSource::Xx => (X, X),
            PairSource::Yy => (Y, Y),
            PairSource::Zz => (Z, Z),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PairSource::Oo => "oo",
            PairSource::Ox => "ox",
            PairSource::Xo => "xo",
            PairSource::Oy => "oy",
            PairSource::Yo => "yo",
            PairSource::Xx => "xx",
            PairSource::Yy => "yy",
            PairSource::Zz => "zz",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        PairSource::ALL.into_iter().find(|s| s.label() == label)
    }

    pub fn involves_vacuum(self) -> bool {
        let (l, r) = self.sides();
        l == Intensity::O || r == Intensity::O
    }
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Photon-number distribution `c_0..c_cutoff` plus the mass beyond the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub coefficients: Vec<f64>,
    pub tail_mass: f64,
}

impl PhotonDistribution {
    /// `c_k`, zero beyond the cutoff.
    pub fn get(&self, k: usize) -> f64 {
        self.coefficients.get(k).copied().unwrap_or(0.0)
    }
}

/// Poisson photon-number distribution of a phase-randomized coherent state.
pub fn poisson_coefficients(mu: f64, cutoff: usize) -> Result<PhotonDistribution> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(
            "intensity must be a finite non-negative number",
        ));
    }
    if cutoff < 1 {
        return Err(Error::Domain("photon-number cutoff must be at least 1"));
    }
    let e = exp(-mu);
    let mut coefficients = Vec::with_capacity(cutoff + 1);
    let mut power = 1.0;
    let mut factorial = 1.0;
    for k in 0..=cutoff {
        if k > 0 {
            power *= mu;
            factorial *= k as f64;
        }
        coefficients.push(e * power / factorial);
    }
    let kept: f64 = coefficients.iter().sum();
    let tail_mass = if kept < 0.5 {
        1.0 - kept
    } else {
        // Sum the remaining terms directly; 1 - kept would be pure round-off.
        let mut term = coefficients[cutoff];
        let mut tail = 0.0;
        let mut k = cutoff;
        loop {
            k += 1;
            term *= mu / k as f64;
            tail += term;
            if term <= tail * 1e-17 || term < f64::MIN_POSITIVE {
                break;
            }
        }
        tail
    };
    Ok(PhotonDistribution {
        coefficients,
        tail_mass,
    })
}

/// Number of pulse pairs `N_lr = round(N_t p_l p_r)` for every pair source.
pub fn pair_counts(spec: &SourceSpec, n_total: u64) -> Result<PairCounts> {
    if n_total == 0 {
        return Err(Error::Domain(
            "total number of pulse pairs must be at least 1",
        ));
    }
    let mut counts = [0u64; 8];
    for (slot, source) in counts.iter_mut().zip(PairSource::ALL) {
        let (l, r) = source.sides();
        let n = round(n_total as f64 * spec.probability(l) * spec.probability(r));
        if !(n >= 1.0) {
            return Err(Error::Degenerate(source));
        }
        *slot = n as u64;
    }
    Ok(PairCounts { counts })
}

/// Pulse-pair counts per pair source, indexed in [`PairSource::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    counts: [u64; 8],
}

impl PairCounts {
    pub fn get(&self, source: PairSource) -> u64 {
        self.counts[source as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PairSource, u64)> + '_ {
        PairSource::ALL.into_iter().zip(self.counts.iter().copied())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Checks every invariant of a [`SourceSpec`] and reports all violations.
pub fn validate_spec(spec: &SourceSpec) -> Result<SourceSpec> {
    let mut problems: Vec<String> = Vec::new();
    let finite = [
        spec.mu_x, spec.mu_y, spec.mu_z, spec.p_x, spec.p_y, spec.p_z,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        problems.push(String::from("all parameters must be finite"));
    }
    if !(spec.mu_x > 0.0) {
        problems.push(format!("mu_x > 0 required (got {})", spec.mu_x));
    }
    if !(spec.mu_x < spec.mu_y) {
        problems.push(format!(
            "mu_x < mu_y required (got {} and {})",
            spec.mu_x, spec.mu_y
        ));
    }
    if !(spec.mu_z > 0.0) {
        problems.push(format!("mu_z > 0 required (got {})", spec.mu_z));
    }
    for (name, p) in [("p_x", spec.p_x), ("p_y", spec.p_y), ("p_z", spec.p_z)] {
        if !(p > 0.0 && p < 1.0) {
            problems.push(format!("{name} must lie in (0, 1) (got {p})"));
        }
    }
    let sum = spec.p_x + spec.p_y + spec.p_z;
    if sum > 1.0 + 1e-12 {
        problems.push(format!("p_x + p_y + p_z must not exceed 1 (got {sum})"));
    }
    if spec.cutoff < 10 {
        problems.push(format!(
            "photon-number cutoff must be at least 10 (got {})",
            spec.cutoff
        ));
    }
    if problems.is_empty() {
        Ok(*spec)
    } else {
        Err(Error::InvalidSpec(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_spec() -> SourceSpec {
        SourceSpec::new(0.071, 0.212, 0.280, 0.357, 0.121, 0.479)
    }

    #[test]
    fn vacuum_distribution() {
        let d = poisson_coefficients(0.0, 10).unwrap();
        assert_eq!(d.coefficients[0], 1.0);
        assert!(d.coefficients[1..].iter().all(|&c| c == 0.0));
        assert_eq!(d.tail_mass, 0.0);
    }

    #[test]
    fn coefficients_match_recurrence() {
        for &mu in &[0.280, 0.071] {
            let d = poisson_coefficients(mu, 20).unwrap();
            let mut c = libm::exp(-mu);
            for k in 0..=20 {
                assert!((d.coefficients[k] - c).abs() <= 1e-15 * c, "mu={mu} k={k}");
                c = c * mu / (k + 1) as f64;
            }
            assert!((d.coefficients[1] - mu * libm::exp(-mu)).abs() < 1e-16);
        }
    }

    #[test]
    fn tail_is_negligible_at_default_cutoff() {
        let d = poisson_coefficients(0.5, DEFAULT_CUTOFF).unwrap();
        assert!(d.tail_mass >= 0.0 && d.tail_mass < 1e-15);
        let big = poisson_coefficients(10.0, 60).unwrap();
        let total: f64 = big.coefficients.iter().sum::<f64>() + big.tail_mass;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(big.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn negative_intensity_is_rejected() {
        assert!(matches!(
            poisson_coefficients(-0.1, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pair_counts_at_reference_spec() {
        let counts = pair_counts(&reference_spec(), 10_000_000_000).unwrap();
        assert_eq!(counts.get(PairSource::Xx), 1_274_490_000);
    }

    #[test]
    fn pair_counts_reject_missing_vacuum() {
        let spec = SourceSpec::new(0.1, 0.2, 0.3, 0.3, 0.3, 0.4);
        assert_eq!(
            pair_counts(&spec, 1_000_000),
            Err(Error::Degenerate(PairSource::Oo))
        );
    }

    #[test]
    fn pair_counts_uniform() {
        let spec = SourceSpec::new(0.1, 0.2, 0.3, 0.25, 0.25, 0.25);
        let counts = pair_counts(&spec, 16).unwrap();
        assert!(counts.iter().all(|(_, n)| n == 1));
    }

    #[test]
    fn validation_reports_every_problem() {
        let mut spec = reference_spec();
        assert!(validate_spec(&spec).is_ok());

        spec.mu_y = spec.mu_x;
        let Err(Error::InvalidSpec(problems)) = validate_spec(&spec) else {
            panic!()
        };
        assert!(problems.iter().any(|p| p.contains("mu_x < mu_y required")));

        let spec = SourceSpec::new(0.1, 0.2, 0.3, 0.4, 0.4, 0.4);
        let Err(Error::InvalidSpec(problems)) = validate_spec(&spec) else {
            panic!()
        };
        assert!(problems.iter().any(|p| p.contains("must not exceed 1")));

        let spec = SourceSpec::new(0.3, 0.2, -1.0, 0.4, 0.4, 0.4);
        let Err(Error::InvalidSpec(problems)) = validate_spec(&spec) else {
            panic!()
        };
        assert_eq!(problems.len(), 3);
    }

    #[test]
    fn labels_round_trip() {
        for s in PairSource::ALL {
            assert_eq!(PairSource::from_label(s.label()), Some(s));
        }
        assert!(PairSource::Ox.involves_vacuum());
        assert!(!PairSource::Xx.involves_vacuum());
    }
}
