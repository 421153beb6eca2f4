//! Worst-case single-photon-pair yield and phase-flip error as functions of `H`.
//!
//! The unknowns are the expected yields `v_lr` of the seven decoy sources
//! `oo, ox, xo, oy, yo, xx, yy`. Each observed count brackets its own
//! expectation, and four joint constraints bracket sums of counts. For a
//! given `H = a0 v_ox + b0 v_xo - a0 b0 v_oo` the single-photon-pair yield
//! bound is linear in the remaining unknowns and is minimized by an LP.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::channel::ObservedStats;
use crate::fluctuation::{mean_range, FailureLedger, FluctuationPolicy};
use crate::lp::{LinearProgram, LpStatus, Relation};
use crate::source::{Intensity, PairSource, SourceSpec};
use crate::{Error, Result};

/// Index of a decoy source in [`PairSource::DECOY`] order.
fn slot(source: PairSource) -> usize {
    match source {
        PairSource::Oo => 0,
        PairSource::Ox => 1,
        PairSource::Xo => 2,
        PairSource::Oy => 3,
        PairSource::Yo => 4,
        PairSource::Xx => 5,
        PairSource::Yy => 6,
        PairSource::Zz => panic!("zz is not a decoy source"),
    }
}

const OO: usize = 0;
const OX: usize = 1;
const XO: usize = 2;
const OY: usize = 3;
const YO: usize = 4;
const XX: usize = 5;
const YY: usize = 6;

/// Photon-number coefficients entering the bounds.
///
/// `a*` are Alice's, `b*` Bob's; primes mark the `y` decoy, `z1` the signal's
/// single-photon probability. The protocol is symmetric so `a = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a0p: f64,
    pub a1p: f64,
    pub a2p: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b0p: f64,
    pub b1p: f64,
    pub b2p: f64,
    pub z1: f64,
}

impl DecoyCoefficients {
    pub fn new(spec: &SourceSpec) -> Result<Self> {
        let x = spec.distribution(Intensity::X)?;
        let y = spec.distribution(Intensity::Y)?;
        let z = spec.distribution(Intensity::Z)?;
        let c = DecoyCoefficients {
            a0: x.get(0),
            a1: x.get(1),
            a2: x.get(2),
            a0p: y.get(0),
            a1p: y.get(1),
            a2p: y.get(2),
            b0: x.get(0),
            b1: x.get(1),
            b2: x.get(2),
            b0p: y.get(0),
            b1p: y.get(1),
            b2p: y.get(2),
            z1: z.get(1),
        };
        if !(c.denominator() > 0.0) {
            return Err(Error::Domain(
                "bound denominator vanishes; mu_x < mu_y required",
            ));
        }
        Ok(c)
    }

    /// `a1 a1' (b1 b2' - b1' b2)`, positive exactly when `mu_x < mu_y`.
    pub fn denominator(&self) -> f64 {
        self.a1 * self.a1p * (self.b1 * self.b2p - self.b1p * self.b2)
    }

    /// Weights of `v` in the numerator of the yield bound.
    pub fn numerator_weights(&self) -> [f64; 7] {
        let mut w = [0.0; 7];
        w[XX] = self.a1p * self.b2p;
        w[OY] = self.a1 * self.b2 * self.a0p;
        w[YO] = self.a1 * self.b2 * self.b0p;
        w[YY] = -self.a1 * self.b2;
        w[OO] = -self.a1 * self.b2 * self.a0p * self.b0p;
        w
    }

    /// Weights of `v` in `H`.
    pub fn h_weights(&self) -> [f64; 7] {
        let mut w = [0.0; 7];
        w[OX] = self.a0;
        w[XO] = self.b0;
        w[OO] = -self.a0 * self.b0;
        w
    }

    /// `H` at a vector of expected yields.
    pub fn h_at(&self, v: &[f64; 7]) -> f64 {
        self.a0 * v[OX] + self.b0 * v[XO] - self.a0 * self.b0 * v[OO]
    }

    /// The single-photon-pair yield bound at a given mean vector and `H`.
    pub fn s11_formula(&self, v: &[f64; 7], h: f64) -> f64 {
        let w = self.numerator_weights();
        let numerator: f64 =
            w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - self.a1p * self.b2p * h;
        numerator / self.denominator()
    }
}

/// Which reference set the expectations refer to.
///
/// Constraints over the decoy set alone and over the decoy set plus the
/// signal's single-photon pairs have the same form, so both build the same
/// system; the distinction is kept to make that explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSet {
    Decoy,
    DecoyWithSignalSinglePhotons,
}

/// Box and joint bounds on the expected decoy yields.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanConstraints {
    /// Pulse pairs `N_lr` in decoy order.
    pub pulses: [f64; 7],
    /// Observed yields `S_lr`.
    pub observed: [f64; 7],
    /// Per-source bounds on `v_lr`.
    pub boxes: [(f64, f64); 7],
    /// Lower bound on `N_yo v_yo + N_oy v_oy`.
    pub yo_oy_lower: f64,
    /// Lower bound on `N_xx v_xx + N_yo v_yo + N_oy v_oy`.
    pub xx_yo_oy_lower: f64,
    /// Upper bound on `N_yy v_yy + N_oo v_oo`.
    pub yy_oo_upper: f64,
    /// Bounds on `N_ox v_ox + N_xo v_xo`.
    pub ox_xo: (f64, f64),
}

impl MeanConstraints {
    /// Checks that the observed mean vector satisfies every constraint.
    pub fn contains_observation(&self) -> bool {
        let lp = self.program(&[0.0; 7], None, true);
        lp.violation(&self.observed) <= 1e-12
    }

    /// LP over the expected yields.
    ///
    /// `weights` is the objective, `h` optionally pins `H` with the given
    /// coefficient row, and `joint` toggles the joint constraints.
    pub fn program(
        &self,
        weights: &[f64; 7],
        h: Option<(f64, [f64; 7])>,
        joint: bool,
    ) -> LinearProgram {
        let lower = self.boxes.iter().map(|b| b.0).collect();
        let upper = self.boxes.iter().map(|b| b.1).collect();
        let mut lp = LinearProgram::new(weights.to_vec(), lower, upper);
        let n = &self.pulses;
        if joint {
            let mut row = vec![0.0; 7];
            row[YO] = n[YO];
            row[OY] = n[OY];
            lp.push("yo+oy lower", row.clone(), Relation::Ge, self.yo_oy_lower);
            row[XX] = n[XX];
            lp.push("xx+yo+oy lower", row, Relation::Ge, self.xx_yo_oy_lower);
            let mut row = vec![0.0; 7];
            row[YY] = n[YY];
            row[OO] = n[OO];
            lp.push("yy+oo upper", row, Relation::Le, self.yy_oo_upper);
            let mut row = vec![0.0; 7];
            row[OX] = n[OX];
            row[XO] = n[XO];
            lp.push("ox+xo lower", row.clone(), Relation::Ge, self.ox_xo.0);
            lp.push("ox+xo upper", row, Relation::Le, self.ox_xo.1);
        }
        if let Some((value, row)) = h {
            lp.push("H", row.to_vec(), Relation::Eq, value);
        }
        lp
    }

    /// Range of `H` implied by the per-source boxes alone.
    pub fn box_h_range(&self, coeffs: &DecoyCoefficients) -> (f64, f64) {
        let w = coeffs.h_weights();
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            let (a, b) = self.boxes[j];
            if wj >= 0.0 {
                lo += wj * a;
                hi += wj * b;
            } else {
                lo += wj * b;
                hi += wj * a;
            }
        }
        (lo, hi)
    }
}

/// Builds the constraint system from observed counts, booking each one-sided bound.
pub fn build_constraints(
    stats: &ObservedStats,
    policy: FluctuationPolicy,
    ledger: &mut FailureLedger,
) -> Result<MeanConstraints> {
    build_constraints_in(stats, policy, ReferenceSet::Decoy, ledger)
}

/// As [`build_constraints`], for an explicit reference set.
pub fn build_constraints_in(
    stats: &ObservedStats,
    policy: FluctuationPolicy,
    _set: ReferenceSet,
    ledger: &mut FailureLedger,
) -> Result<MeanConstraints> {
    let eps = policy.epsilon();
    let mut pulses = [0.0; 7];
    let mut counts = [0.0; 7];
    let mut observed = [0.0; 7];
    let mut boxes = [(0.0, 0.0); 7];
    for source in PairSource::DECOY {
        let s = stats.get(source)?;
        let j = slot(source);
        pulses[j] = s.pulses as f64;
        counts[j] = s.detections;
        observed[j] = s.yield_rate();
        let (lo, hi) = mean_range(s.detections, policy)?;
        boxes[j] = (
            (lo / pulses[j]).clamp(0.0, 1.0),
            (hi / pulses[j]).clamp(0.0, 1.0),
        );
        ledger.record(format!("S_{source} lower"), eps);
        ledger.record(format!("S_{source} upper"), eps);
    }
    let yo_oy = mean_range(counts[YO] + counts[OY], policy)?;
    let xx_yo_oy = mean_range(counts[XX] + counts[YO] + counts[OY], policy)?;
    let yy_oo = mean_range(counts[YY] + counts[OO], policy)?;
    let ox_xo = mean_range(counts[OX] + counts[XO], policy)?;
    for name in [
        "yo+oy lower",
        "xx+yo+oy lower",
        "yy+oo upper",
        "ox+xo lower",
        "ox+xo upper",
    ] {
        ledger.record(String::from(name), eps);
    }
    Ok(MeanConstraints {
        pulses,
        observed,
        boxes,
        yo_oy_lower: yo_oy.0,
        xx_yo_oy_lower: xx_yo_oy.0,
        yy_oo_upper: yy_oo.1,
        ox_xo,
    })
}

/// The interval `[h - δ, h + δ]` of admissible `H` values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HInterval {
    pub h: f64,
    pub delta: f64,
}

impl HInterval {
    pub fn lo(&self) -> f64 {
        (self.h - self.delta).max(0.0)
    }

    pub fn hi(&self) -> f64 {
        self.h + self.delta
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo() && value <= self.hi()
    }
}

/// Centre and half-width of the admissible `H` range for a symmetric set-up.
///
/// With asymmetric ranges (Chernoff, or zero counts) the wider of the two
/// sides sets the half-width.
pub fn h_interval(
    stats: &ObservedStats,
    spec: &SourceSpec,
    policy: FluctuationPolicy,
) -> Result<HInterval> {
    let ox = stats.get(PairSource::Ox)?;
    let xo = stats.get(PairSource::Xo)?;
    let oo = stats.get(PairSource::Oo)?;
    if ox.pulses != xo.pulses {
        return Err(Error::Config(format!(
            "H interval needs N_ox = N_xo (got {} and {})",
            ox.pulses, xo.pulses
        )));
    }
    let a0 = libm::exp(-spec.mu_x);
    let h = a0 * ox.yield_rate() + a0 * xo.yield_rate() - a0 * a0 * oo.yield_rate();
    // Shift the ox+xo and oo expectations to the same end of their ranges;
    // for the symmetric normal ranges this is a0 γ√k/N - a0² γ√k_oo/N_oo.
    let k = ox.detections + xo.detections;
    let (k_lo, k_hi) = mean_range(k, policy)?;
    let (v_lo, v_hi) = mean_range(oo.detections, policy)?;
    let (n, m) = (ox.pulses as f64, oo.pulses as f64);
    let up = a0 * (k_hi - k) / n - a0 * a0 * (v_hi - oo.detections) / m;
    let down = a0 * (k - k_lo) / n - a0 * a0 * (oo.detections - v_lo) / m;
    let delta = up.max(down).max(0.0);
    Ok(HInterval { h, delta })
}

/// Lower bound on the single-photon-pair yield at a fixed `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S11Bound {
    /// Bound clamped to `[0, 1]`; zero when `H` is infeasible.
    pub value: f64,
    /// Unclamped LP optimum (NaN when infeasible).
    pub raw: f64,
    pub feasible: bool,
}

/// Minimizes the yield bound over the constraint system with `H` pinned.
pub fn s11_lower_bound(
    constraints: &MeanConstraints,
    spec: &SourceSpec,
    h: f64,
) -> Result<S11Bound> {
    s11_with(constraints, &DecoyCoefficients::new(spec)?, h)
}

/// As [`s11_lower_bound`] with precomputed coefficients.
pub fn s11_with(
    constraints: &MeanConstraints,
    coeffs: &DecoyCoefficients,
    h: f64,
) -> Result<S11Bound> {
    let lp = constraints.program(
        &coeffs.numerator_weights(),
        Some((h, coeffs.h_weights())),
        true,
    );
    let solution = lp.solve()?;
    if solution.status != LpStatus::Optimal {
        return Ok(S11Bound {
            value: 0.0,
            raw: f64::NAN,
            feasible: false,
        });
    }
    let raw = (solution.objective - coeffs.a1p * coeffs.b2p * h) / coeffs.denominator();
    Ok(S11Bound {
        value: raw.clamp(0.0, 1.0),
        raw,
        feasible: true,
    })
}

/// Yield bound using only the per-source boxes, with `H` free over its box range.
pub fn s11_box_only(
    constraints: &MeanConstraints,
    coeffs: &DecoyCoefficients,
) -> Result<(S11Bound, (f64, f64))> {
    let lp = constraints.program(&coeffs.numerator_weights(), None, false);
    let solution = lp.solve()?;
    let range = constraints.box_h_range(coeffs);
    if solution.status != LpStatus::Optimal {
        return Ok((
            S11Bound {
                value: 0.0,
                raw: f64::NAN,
                feasible: false,
            },
            range,
        ));
    }
    let raw = (solution.objective - coeffs.a1p * coeffs.b2p * range.1) / coeffs.denominator();
    Ok((
        S11Bound {
            value: raw.clamp(0.0, 1.0),
            raw,
            feasible: true,
        },
        range,
    ))
}

/// LP audit record: the program, its optimum and the constraints active there.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LpDiagnostic {
    pub h: f64,
    pub program: LinearProgram,
    pub status: LpStatus,
    pub solution: Vec<f64>,
    pub objective: f64,
    pub s11: f64,
    pub active_constraints: Vec<String>,
    pub active_bounds: Vec<String>,
}

pub fn s11_diagnostic(
    constraints: &MeanConstraints,
    spec: &SourceSpec,
    h: f64,
) -> Result<LpDiagnostic> {
    let coeffs = DecoyCoefficients::new(spec)?;
    let lp = constraints.program(
        &coeffs.numerator_weights(),
        Some((h, coeffs.h_weights())),
        true,
    );
    let solution = lp.solve()?;
    let bound = s11_with(constraints, &coeffs, h)?;
    let (active_constraints, active_bounds) = if solution.status == LpStatus::Optimal {
        let rows = lp
            .active_set(&solution.x, 1e-9)
            .into_iter()
            .map(|i| String::from(lp.constraints[i].label))
            .collect();
        let mut bounds = Vec::new();
        for (j, source) in PairSource::DECOY.into_iter().enumerate() {
            let (lo, hi) = constraints.boxes[j];
            let tol = 1e-9 * hi.abs().max(f64::MIN_POSITIVE);
            if (solution.x[j] - lo).abs() <= tol {
                bounds.push(format!("v_{source} lower"));
            }
            if (solution.x[j] - hi).abs() <= tol && hi > lo {
                bounds.push(format!("v_{source} upper"));
            }
        }
        (rows, bounds)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(LpDiagnostic {
        h,
        program: lp,
        status: solution.status,
        objective: solution.objective,
        solution: solution.x,
        s11: bound.value,
        active_constraints,
        active_bounds,
    })
}

/// Clamping applied to the phase-flip bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Clamp {
    Low,
    High,
}

/// Upper bound on the single-photon phase-flip error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E11Bound {
    pub value: f64,
    pub raw: f64,
    pub clamp: Option<Clamp>,
}

/// Upper bound on the expected error yield of `xx`, booking one failure probability.
pub fn xx_error_yield_upper(
    stats: &ObservedStats,
    policy: FluctuationPolicy,
    ledger: &mut FailureLedger,
) -> Result<f64> {
    let xx = stats.get(PairSource::Xx)?;
    let (_, hi) = mean_range(xx.errors, policy)?;
    ledger.record("T_xx upper", policy.epsilon());
    Ok(hi / xx.pulses as f64)
}

/// `(T̄_xx - H/2) / (a1 b1 s11)` clamped to `[0, 1/2]`.
pub fn e11_from_parts(
    t_xx_upper: f64,
    coeffs: &DecoyCoefficients,
    h: f64,
    s11: f64,
) -> Result<E11Bound> {
    if !(s11 > 0.0) {
        return Err(Error::Domain(
            "phase-flip bound needs a positive single-photon yield",
        ));
    }
    let raw = (t_xx_upper - h / 2.0) / (coeffs.a1 * coeffs.b1 * s11);
    let (value, clamp) = if raw < 0.0 {
        (0.0, Some(Clamp::Low))
    } else if raw > 0.5 {
        (0.5, Some(Clamp::High))
    } else {
        (raw, None)
    };
    Ok(E11Bound { value, raw, clamp })
}

pub fn e11_upper_bound(
    stats: &ObservedStats,
    policy: FluctuationPolicy,
    spec: &SourceSpec,
    h: f64,
    s11: f64,
) -> Result<E11Bound> {
    let mut ledger = FailureLedger::default();
    let t = xx_error_yield_upper(stats, policy, &mut ledger)?;
    e11_from_parts(t, &DecoyCoefficients::new(spec)?, h, s11)
}
