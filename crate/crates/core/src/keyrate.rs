//! Finite-key rate with the yield and phase-flip bounds worst-cased jointly over `H`.
//!
//! For every admissible `H` the yield bound and the phase-flip bound are
//! computed at that same `H`, the rate is formed, and the minimum over the
//! interval is reported. The two baselines decouple the bounds: one keeps
//! the joint constraints but minimizes and maximizes each bound separately,
//! the other drops the joint constraints altogether.

use alloc::vec::Vec;

use crate::channel::{ChannelParams, ObservedStats};
use crate::estimator::{
    build_constraints, e11_from_parts, h_interval, s11_box_only, s11_with, xx_error_yield_upper,
    DecoyCoefficients, HInterval, MeanConstraints,
};
use crate::fluctuation::{FailureLedger, FluctuationPolicy};
use crate::source::{PairSource, SourceSpec};
use crate::{Error, Result};

const GOLDEN_STEPS: usize = 40;

/// `-p log2 p - (1-p) log2 (1-p)`, zero at the end points.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain("binary entropy argument must lie in [0, 1]"));
    }
    Ok(h2(p))
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * libm::log2(p) + (1.0 - p) * libm::log2(1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateMethod {
    /// Yield and phase-flip bounds worst-cased jointly over `H`.
    #[default]
    ThisWork,
    /// Joint constraints, but each bound worst-cased on its own.
    JointSeparate,
    /// Per-source boxes only.
    Independent,
}

impl RateMethod {
    pub const ALL: [RateMethod; 3] = [
        RateMethod::ThisWork,
        RateMethod::JointSeparate,
        RateMethod::Independent,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RateMethod::ThisWork => "this_work",
            RateMethod::JointSeparate => "joint_separate",
            RateMethod::Independent => "independent",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == label)
    }
}

impl core::fmt::Display for RateMethod {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RateSettings {
    /// Multiplier on the yield term (1 for the nominal analysis).
    pub kappa_s: f64,
    /// Multiplier on the phase-flip bound.
    pub kappa_e: f64,
    /// Points of the uniform scan over the `H` interval.
    pub grid_points: usize,
    /// Golden-section refinement around the grid minimum.
    pub refine: bool,
}

impl Default for RateSettings {
    fn default() -> Self {
        RateSettings {
            kappa_s: 1.0,
            kappa_e: 1.0,
            grid_points: 201,
            refine: true,
        }
    }
}

impl RateSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_s > 0.0 && self.kappa_e > 0.0) {
            return Err(Error::Domain("kappa factors must be positive"));
        }
        if self.grid_points < 2 {
            return Err(Error::Domain("H grid needs at least two points"));
        }
        Ok(())
    }
}

/// One evaluation of the bounds and rate at a given `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TracePoint {
    pub h: f64,
    /// `None` when the LP is infeasible at this `H`.
    pub s11: Option<f64>,
    /// `None` when the yield bound is zero.
    pub e11: Option<f64>,
    /// Unclamped rate per pulse pair.
    pub rate: f64,
    /// Continuous extension of `rate` through the clamped regions (see [`RateModel::search_rate`]).
    pub search_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClampFlags {
    /// The yield bound was clamped at zero (or the LP was infeasible).
    pub s11_zero: bool,
    /// The phase-flip bound reached 1/2.
    pub e11_high: bool,
    /// The phase-flip bound was negative before clamping.
    pub e11_low: bool,
    /// The reported rate was clamped at zero.
    pub rate_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyRateResult {
    pub method: RateMethod,
    /// Secure key bits per sent pulse pair, never negative.
    pub rate_per_pair: f64,
    /// The same before clamping at zero.
    pub raw_rate: f64,
    /// Continuous extension of `raw_rate` through the clamped regions; the optimizer maximizes this.
    pub search_rate: f64,
    /// Worst-case `H` (only for the joint method).
    pub h_star: Option<f64>,
    pub s11: f64,
    pub e11: f64,
    pub interval: HInterval,
    pub s_zz: f64,
    pub e_zz: f64,
    pub trace: Vec<TracePoint>,
    pub ledger: FailureLedger,
    pub ledger_total: f64,
    pub kappa_s: f64,
    pub kappa_e: f64,
    pub clamp_flags: ClampFlags,
}

/// Precomputed ingredients of the rate for one data set.
#[derive(Debug, Clone)]
pub struct RateModel {
    pub coeffs: DecoyCoefficients,
    pub constraints: MeanConstraints,
    pub interval: HInterval,
    pub t_xx_upper: f64,
    pub s_zz: f64,
    pub e_zz: f64,
    pub p_z: f64,
    pub f: f64,
    pub settings: RateSettings,
    pub ledger: FailureLedger,
}

impl RateModel {
    pub fn new(
        stats: &ObservedStats,
        spec: &SourceSpec,
        params: &ChannelParams,
        policy: FluctuationPolicy,
        settings: RateSettings,
    ) -> Result<Self> {
        settings.validate()?;
        let coeffs = DecoyCoefficients::new(spec)?;
        let mut ledger = FailureLedger::default();
        let constraints = build_constraints(stats, policy, &mut ledger)?;
        let t_xx_upper = xx_error_yield_upper(stats, policy, &mut ledger)?;
        let interval = h_interval(stats, spec, policy)?;
        let zz = stats.get(PairSource::Zz)?;
        Ok(RateModel {
            coeffs,
            constraints,
            interval,
            t_xx_upper,
            s_zz: zz.yield_rate(),
            e_zz: zz.error_rate(),
            p_z: spec.p_z,
            f: params.f,
            settings,
            ledger,
        })
    }

    /// Error-correction leakage per pulse pair.
    pub fn leak(&self) -> f64 {
        self.p_z * self.p_z * self.f * self.s_zz * h2(self.e_zz.clamp(0.0, 0.5))
    }

    /// Unclamped rate from given bounds.
    pub fn rate_from(&self, s11: f64, e11_raw: f64) -> f64 {
        let z1 = self.coeffs.z1;
        let phase = h2((self.settings.kappa_e * e11_raw).clamp(0.0, 0.5));
        self.p_z * self.p_z * z1 * z1 * self.settings.kappa_s * s11 * (1.0 - phase) - self.leak()
    }

    /// Rate extended continuously past the points where the bounds clamp.
    ///
    /// `excess = κe (T̄_xx - H/2) / (a1 b1)` is the phase-flip bound times
    /// the yield bound. Past `E11 = 1/2` the entropy is continued linearly
    /// as `2e`, which turns the yield term into `s11 - 2 excess`, a form
    /// that stays meaningful for negative `s11`. It
    /// agrees with the clamped rate wherever no clamp is active and gives
    /// the optimizer a slope across the zero-rate plateau. Negative values
    /// are divided by the prefactor `p_z² z1² κs`; otherwise shrinking the
    /// signal would pull any negative rate towards zero.
    pub fn search_rate(&self, s11_raw: f64, excess: f64) -> f64 {
        let z1 = self.coeffs.z1;
        let c = self.p_z * self.p_z * z1 * z1 * self.settings.kappa_s;
        let term = if s11_raw > 0.0 && excess <= 0.5 * s11_raw {
            s11_raw * (1.0 - h2((excess / s11_raw).max(0.0)))
        } else {
            s11_raw - 2.0 * excess
        };
        let v = c * term - self.leak();
        if v < 0.0 && c > 0.0 {
            v / c
        } else {
            v
        }
    }

    pub fn excess(&self, h: f64) -> f64 {
        self.settings.kappa_e * (self.t_xx_upper - h / 2.0) / (self.coeffs.a1 * self.coeffs.b1)
    }

    /// Bounds and rate with both bounds taken at the same `H`.
    pub fn point(&self, h: f64) -> Result<TracePoint> {
        let s = s11_with(&self.constraints, &self.coeffs, h)?;
        if !s.feasible {
            let search_rate = self.search_rate(0.0, self.excess(h).max(0.0));
            return Ok(TracePoint {
                h,
                s11: None,
                e11: None,
                rate: -self.leak(),
                search_rate,
            });
        }
        let search_rate = self.search_rate(s.raw, self.excess(h));
        if s.value <= 0.0 {
            return Ok(TracePoint {
                h,
                s11: Some(0.0),
                e11: None,
                rate: -self.leak(),
                search_rate,
            });
        }
        let e = e11_from_parts(self.t_xx_upper, &self.coeffs, h, s.value)?;
        Ok(TracePoint {
            h,
            s11: Some(s.value),
            e11: Some(e.raw),
            rate: self.rate_from(s.value, e.raw),
            search_rate,
        })
    }

    /// Uniform grid over the `H` interval (a single point when it is degenerate).
    pub fn h_grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.interval.lo(), self.interval.hi());
        if !(hi > lo) {
            return alloc::vec![self.interval.h];
        }
        let n = self.settings.grid_points;
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Bounds and rate at one `H`.
pub fn rate_at_h(model: &RateModel, h: f64) -> Result<TracePoint> {
    model.point(h)
}

/// Golden-section search for the minimum of `g` on `[a, b]`.
fn golden_min<F>(mut a: f64, mut b: f64, mut g: F) -> Result<(f64, TracePoint)>
where
    F: FnMut(f64) -> Result<(f64, TracePoint)>,
{
    let ratio = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut gc = g(c)?;
    let mut gd = g(d)?;
    for _ in 0..GOLDEN_STEPS {
        if (b - a) <= 1e-9 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if gc.0 <= gd.0 {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d)?;
        }
    }
    Ok(if gc.0 <= gd.0 { gc } else { gd })
}

/// Minimizes `score` over the grid, then refines between the neighbours of the minimum.
fn scan_min<F>(model: &RateModel, mut score: F, trace: &mut Vec<TracePoint>) -> Result<TracePoint>
where
    F: FnMut(&TracePoint) -> f64,
{
    let grid = model.h_grid();
    let mut best: Option<(usize, f64)> = None;
    for (i, &h) in grid.iter().enumerate() {
        let p = model.point(h)?;
        let v = score(&p);
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
        trace.push(p);
    }
    let (i, v) = best.ok_or(Error::Numeric("empty H grid"))?;
    let start = trace.len() - grid.len();
    let mut winner = trace[start + i];
    if model.settings.refine && grid.len() > 2 {
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        let (gv, gp) = golden_min(a, b, |h| {
            let p = model.point(h)?;
            Ok((score(&p), p))
        })?;
        if gv < v {
            winner = gp;
        }
    }
    Ok(winner)
}

/// Worst-case quantities selected by one of the methods.
struct Selection {
    raw_rate: f64,
    search_rate: f64,
    h_star: Option<f64>,
    s11: f64,
    e11_raw: f64,
}

fn finish(
    model: &RateModel,
    method: RateMethod,
    sel: Selection,
    trace: Vec<TracePoint>,
    ledger: FailureLedger,
) -> KeyRateResult {
    let Selection {
        raw_rate,
        search_rate,
        h_star,
        s11,
        e11_raw,
    } = sel;
    let clamp_flags = ClampFlags {
        s11_zero: s11 <= 0.0,
        e11_high: s11 > 0.0 && model.settings.kappa_e * e11_raw >= 0.5,
        e11_low: s11 > 0.0 && e11_raw < 0.0,
        rate_zero: raw_rate <= 0.0,
    };
    let e11 = if s11 > 0.0 {
        e11_raw.clamp(0.0, 0.5)
    } else {
        0.5
    };
    KeyRateResult {
        method,
        rate_per_pair: raw_rate.max(0.0),
        raw_rate,
        search_rate,
        h_star,
        s11: s11.max(0.0),
        e11,
        interval: model.interval,
        s_zz: model.s_zz,
        e_zz: model.e_zz,
        trace,
        ledger_total: ledger.total(),
        ledger,
        kappa_s: model.settings.kappa_s,
        kappa_e: model.settings.kappa_e,
        clamp_flags,
    }
}

/// Key rate with the bounds worst-cased jointly over the `H` interval.
pub fn worst_case_rate(
    stats: &ObservedStats,
    spec: &SourceSpec,
    params: &ChannelParams,
    policy: FluctuationPolicy,
    settings: RateSettings,
) -> Result<KeyRateResult> {
    let model = RateModel::new(stats, spec, params, policy, settings)?;
    rate_for_model(&model, RateMethod::ThisWork)
}

/// Key rate under one of the baseline analyses.
pub fn baseline_rate(
    method: RateMethod,
    stats: &ObservedStats,
    spec: &SourceSpec,
    params: &ChannelParams,
    policy: FluctuationPolicy,
    settings: RateSettings,
) -> Result<KeyRateResult> {
    let model = RateModel::new(stats, spec, params, policy, settings)?;
    rate_for_model(&model, method)
}

/// Key rate of any method from a prepared model.
pub fn rate_for_model(model: &RateModel, method: RateMethod) -> Result<KeyRateResult> {
    let mut trace = Vec::new();
    match method {
        RateMethod::ThisWork => {
            let worst = scan_min(model, |p| p.rate, &mut trace)?;
            let search_rate = trace
                .iter()
                .map(|p| p.search_rate)
                .fold(worst.search_rate, f64::min);
            let sel = Selection {
                raw_rate: worst.rate,
                search_rate,
                h_star: Some(worst.h),
                s11: worst.s11.unwrap_or(0.0),
                e11_raw: worst.e11.unwrap_or(0.5),
            };
            Ok(finish(model, method, sel, trace, model.ledger.clone()))
        }
        RateMethod::JointSeparate => {
            // Smallest yield over H, and the phase-flip bound with both its
            // numerator (at the smallest H) and denominator worst-cased.
            let low = scan_min(model, |p| p.s11.unwrap_or(0.0), &mut trace)?;
            let s11 = low.s11.unwrap_or(0.0);
            let h_lo = model.interval.lo();
            let raw_s11 = match s11_with(&model.constraints, &model.coeffs, low.h)?.raw {
                r if r.is_finite() => r,
                _ => 0.0,
            };
            let (e11_raw, raw_rate) = if s11 > 0.0 {
                let e = e11_from_parts(model.t_xx_upper, &model.coeffs, h_lo, s11)?;
                (e.raw, model.rate_from(s11, e.raw))
            } else {
                (0.5, -model.leak())
            };
            let search_rate = model.search_rate(raw_s11, model.excess(h_lo));
            let sel = Selection {
                raw_rate,
                search_rate,
                h_star: None,
                s11,
                e11_raw,
            };
            Ok(finish(model, method, sel, trace, model.ledger.clone()))
        }
        RateMethod::Independent => {
            let (bound, (h_lo, _)) = s11_box_only(&model.constraints, &model.coeffs)?;
            let h_lo = h_lo.max(0.0);
            let s11 = if bound.feasible { bound.value } else { 0.0 };
            let (e11_raw, raw_rate) = if s11 > 0.0 {
                let e = e11_from_parts(model.t_xx_upper, &model.coeffs, h_lo, s11)?;
                (e.raw, model.rate_from(s11, e.raw))
            } else {
                (0.5, -model.leak())
            };
            let raw_s11 = if bound.feasible { bound.raw } else { 0.0 };
            let search_rate = model.search_rate(raw_s11, model.excess(h_lo));
            // Only the per-source boxes and the error-yield bound are used.
            let mut ledger = FailureLedger::default();
            for entry in &model.ledger.entries {
                if entry.bound.starts_with("S_") || entry.bound.starts_with("T_") {
                    ledger.record(entry.bound.clone(), entry.epsilon);
                }
            }
            let sel = Selection {
                raw_rate,
                search_rate,
                h_star: None,
                s11,
                e11_raw,
            };
            Ok(finish(model, method, sel, trace, ledger))
        }
    }
}
