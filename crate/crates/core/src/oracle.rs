//! Direct Bell-state-measurement simulation used to verify the closed-form gains.
//!
//! Both sides send phase-randomized coherent states. For a fixed relative
//! phase the four output modes (port 1/2, polarization H/V) are independent
//! Poisson fields, so each threshold detector clicks independently. The
//! phase average uses the periodic trapezoid rule, which converges
//! spectrally for these smooth integrands.

use libm::{cos, expm1, log1p, sin, sqrt};

use crate::channel::{ChannelParams, Gain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    /// Polarization (H, V) amplitudes of bit value `bit`.
    fn polarization(self, bit: u8) -> (f64, f64) {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        match (self, bit) {
            (Basis::Z, 0) => (1.0, 0.0),
            (Basis::Z, _) => (0.0, 1.0),
            (Basis::X, 0) => (h, h),
            (Basis::X, _) => (h, -h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BellOutcome {
    PsiMinus,
    PsiPlus,
}

/// Detector order in `clicks`: 1H, 1V, 2H, 2V.
fn classify(clicks: [bool; 4]) -> Option<BellOutcome> {
    match clicks {
        [true, false, false, true] | [false, true, true, false] => Some(BellOutcome::PsiMinus),
        [true, true, false, false] | [false, false, true, true] => Some(BellOutcome::PsiPlus),
        _ => None,
    }
}

/// Success and error probabilities for one fixed phase, bit pair and Bob polarization.
fn event_probabilities(
    amp_a: f64,
    amp_b: f64,
    phase: f64,
    pol_a: (f64, f64),
    pol_b: (f64, f64),
    p_d: f64,
) -> [(Option<BellOutcome>, f64); 16] {
    // Complex amplitudes of each input per polarization.
    let (br, bi) = (amp_b * cos(phase), amp_b * sin(phase));
    let a = [(amp_a * pol_a.0, 0.0), (amp_a * pol_a.1, 0.0)];
    let b = [(br * pol_b.0, bi * pol_b.0), (br * pol_b.1, bi * pol_b.1)];
    let mut intensity = [0.0; 4];
    for pol in 0..2 {
        let (sr, si) = (a[pol].0 + b[pol].0, a[pol].1 + b[pol].1);
        let (dr, di) = (a[pol].0 - b[pol].0, a[pol].1 - b[pol].1);
        intensity[pol] = 0.5 * (sr * sr + si * si);
        intensity[2 + pol] = 0.5 * (dr * dr + di * di);
    }
    let mut no_click = [0.0; 4];
    let mut click = [0.0; 4];
    for d in 0..4 {
        let ln_q = log1p(-p_d) - intensity[d];
        no_click[d] = libm::exp(ln_q);
        click[d] = -expm1(ln_q);
    }
    let mut out = [(None, 0.0); 16];
    for (pattern, slot) in out.iter_mut().enumerate() {
        let clicks = [
            pattern & 1 != 0,
            pattern & 2 != 0,
            pattern & 4 != 0,
            pattern & 8 != 0,
        ];
        let mut p = 1.0;
        for d in 0..4 {
            p *= if clicks[d] { click[d] } else { no_click[d] };
        }
        *slot = (classify(clicks), p);
    }
    out
}

/// Gain and error gain obtained by simulating the measurement directly.
///
/// Bob's state is replaced by the orthogonal one with probability `e_d`
/// (an incoherent misalignment flip); both Bell outcomes are accepted.
pub fn bsm_oracle_gain(
    mu_a: f64,
    mu_b: f64,
    eta_a: f64,
    eta_b: f64,
    params: &ChannelParams,
    basis: Basis,
    phase_points: usize,
) -> Gain {
    let phase_points = phase_points.max(64);
    let amp_a = sqrt(eta_a * mu_a);
    let amp_b = sqrt(eta_b * mu_b);
    let mut q = 0.0;
    let mut eq = 0.0;
    for j in 0..phase_points {
        let phase = 2.0 * core::f64::consts::PI * j as f64 / phase_points as f64;
        for bit_a in 0..2u8 {
            for bit_b in 0..2u8 {
                for (flipped, weight) in [(false, 1.0 - params.e_d), (true, params.e_d)] {
                    if weight == 0.0 {
                        continue;
                    }
                    let sent_b = if flipped { 1 - bit_b } else { bit_b };
                    let events = event_probabilities(
                        amp_a,
                        amp_b,
                        phase,
                        basis.polarization(bit_a),
                        basis.polarization(sent_b),
                        params.p_d,
                    );
                    for (outcome, p) in events {
                        let Some(outcome) = outcome else { continue };
                        let w = weight * p;
                        q += w;
                        let error = match basis {
                            // psi- announces anti-correlated bits, psi+ correlated ones.
                            Basis::X => match outcome {
                                BellOutcome::PsiMinus => bit_a == bit_b,
                                BellOutcome::PsiPlus => bit_a != bit_b,
                            },
                            // Both outcomes announce anti-correlated bits.
                            Basis::Z => bit_a == bit_b,
                        };
                        if error {
                            eq += w;
                        }
                    }
                }
            }
        }
    }
    let norm = 4.0 * phase_points as f64;
    Gain {
        q: q / norm,
        eq: eq / norm,
    }
}
