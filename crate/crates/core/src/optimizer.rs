//! Multi-start Nelder–Mead search over intensities and sending probabilities.
//!
//! The six free parameters are mapped to an unconstrained vector: sigmoids
//! for the intensities (which enforces `mu_x < mu_y`) and a softmax for the
//! four sending probabilities (which keeps every one positive and their sum
//! at one). The objective is the rate continued through its clamps, so
//! even when every point of a start has rate zero the search still has a
//! slope to follow.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{simulate_observed, ChannelParams, SimulationMode};
use crate::fluctuation::FluctuationPolicy;
use crate::keyrate::{rate_for_model, KeyRateResult, RateMethod, RateModel, RateSettings};
use crate::source::SourceSpec;
use crate::{Error, Result};

const DIM: usize = 6;
const MU_X_RANGE: (f64, f64) = (1e-4, 0.5);
const MU_GAP: f64 = 1e-3;
const MU_MAX: f64 = 1.0;
const MU_Z_MIN: f64 = 1e-3;
/// Score of parameter sets the analysis rejects.
const INFEASIBLE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SearchConfig {
    pub starts: usize,
    pub max_iterations: usize,
    /// Relative spread of the simplex values at which a start stops.
    pub tolerance: f64,
    pub seed: u64,
    /// `H` grid used while searching; the winner is re-evaluated with the full settings.
    pub search_grid_points: usize,
    /// Restarts of the simplex around the best point after convergence.
    pub restarts: usize,
    /// Extra starting points, tried before the quasi-random ones.
    pub warm_starts: Vec<SourceSpec>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            starts: 16,
            max_iterations: 400,
            tolerance: 1e-3,
            seed: 0,
            search_grid_points: 41,
            restarts: 1,
            warm_starts: Vec::new(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 && self.warm_starts.is_empty() {
            return Err(Error::Config("at least one start is required".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.search_grid_points < 2 {
            return Err(Error::Config(
                "search grid needs at least two points".into(),
            ));
        }
        Ok(())
    }
}

/// Everything that stays fixed while the source parameters vary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub params: ChannelParams,
    pub n_total: u64,
    pub policy: FluctuationPolicy,
    pub method: RateMethod,
    pub settings: RateSettings,
}

impl Problem {
    /// Full analysis of one parameter set.
    pub fn evaluate(&self, spec: &SourceSpec) -> Result<KeyRateResult> {
        self.evaluate_with(spec, self.settings)
    }

    fn evaluate_with(&self, spec: &SourceSpec, settings: RateSettings) -> Result<KeyRateResult> {
        let stats = simulate_observed(
            spec,
            &self.params,
            self.n_total,
            SimulationMode::Expected,
            0,
        )?;
        let model = RateModel::new(&stats, spec, &self.params, self.policy, settings)?;
        rate_for_model(&model, self.method)
    }

    /// Search objective: the continued rate, or a fixed penalty.
    fn score(&self, spec: &SourceSpec, settings: RateSettings) -> f64 {
        match self.evaluate_with(spec, settings) {
            Ok(r) if r.search_rate.is_finite() => r.search_rate,
            _ => INFEASIBLE,
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-t))
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    libm::log(p / (1.0 - p))
}

/// Maps an unconstrained vector to a valid parameter set.
pub fn decode(theta: &[f64; DIM], cutoff: usize) -> SourceSpec {
    let mu_x = MU_X_RANGE.0 + (MU_X_RANGE.1 - MU_X_RANGE.0) * sigmoid(theta[0]);
    let mu_y = mu_x + MU_GAP + (MU_MAX - mu_x - MU_GAP) * sigmoid(theta[1]);
    let mu_z = MU_Z_MIN + (MU_MAX - MU_Z_MIN) * sigmoid(theta[2]);
    let top = theta[3].max(theta[4]).max(theta[5]).max(0.0);
    let w = [
        libm::exp(theta[3] - top),
        libm::exp(theta[4] - top),
        libm::exp(theta[5] - top),
        libm::exp(-top),
    ];
    let total: f64 = w.iter().sum();
    let mut spec = SourceSpec::new(mu_x, mu_y, mu_z, w[0] / total, w[1] / total, w[2] / total);
    spec.cutoff = cutoff;
    spec
}

/// Inverse of [`decode`], clamping parameters that lie outside the searched box.
pub fn encode(spec: &SourceSpec) -> [f64; DIM] {
    let mu_x = spec.mu_x.clamp(MU_X_RANGE.0, MU_X_RANGE.1);
    let mu_y = spec.mu_y.clamp(mu_x + MU_GAP, MU_MAX);
    let mu_z = spec.mu_z.clamp(MU_Z_MIN, MU_MAX);
    let p_o = spec.p_o().max(1e-9);
    let ln = |p: f64| libm::log(p.max(1e-9) / p_o);
    [
        logit((mu_x - MU_X_RANGE.0) / (MU_X_RANGE.1 - MU_X_RANGE.0)),
        logit((mu_y - mu_x - MU_GAP) / (MU_MAX - mu_x - MU_GAP)),
        logit((mu_z - MU_Z_MIN) / (MU_MAX - MU_Z_MIN)),
        ln(spec.p_x),
        ln(spec.p_y),
        ln(spec.p_z),
    ]
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    let step = inv;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv *= step;
    }
    out
}

/// Shifted Halton points mapped to the unconstrained box `[-2.5, 2.5]^6`.
fn quasi_random_starts(count: usize, seed: u64) -> Vec<[f64; DIM]> {
    const BASES: [u64; DIM] = [2, 3, 5, 7, 11, 13];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; DIM] = core::array::from_fn(|_| rng.random::<f64>());
    (1..=count as u64)
        .map(|i| {
            core::array::from_fn(|d| {
                let v = radical_inverse(i, BASES[d]) + shift[d];
                let u = v - libm::floor(v);
                -2.5 + 5.0 * u
            })
        })
        .collect()
}

/// A middle-of-the-road parameter set that is always tried first.
pub fn default_start() -> SourceSpec {
    SourceSpec::new(0.1, 0.3, 0.4, 0.3, 0.15, 0.45)
}

/// Progress and outcome of one start.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StartOutcome {
    pub start: SourceSpec,
    pub best: SourceSpec,
    pub best_score: f64,
    /// Incumbent score after each iteration; never decreases.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Executes independent starts; implementations may run them in parallel.
pub trait StartRunner {
    fn run<F>(&self, count: usize, job: F) -> Vec<StartOutcome>
    where
        F: Fn(usize) -> StartOutcome + Sync + Send;
}

/// Runs the starts one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl StartRunner for Sequential {
    fn run<F>(&self, count: usize, job: F) -> Vec<StartOutcome>
    where
        F: Fn(usize) -> StartOutcome + Sync + Send,
    {
        (0..count).map(job).collect()
    }
}

/// Maximizes `score` from `x0` with Nelder–Mead (standard coefficients).
fn nelder_mead<F>(
    mut score: F,
    x0: [f64; DIM],
    config: &SearchConfig,
    history: &mut Vec<f64>,
) -> ([f64; DIM], f64)
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    let mut best_x = x0;
    let mut best = f64::NEG_INFINITY;
    let mut budget = config.max_iterations;
    let mut center = x0;
    for round in 0..=config.restarts {
        let step = if round == 0 { 0.6 } else { 0.25 };
        // Minimize the negated score.
        let mut simplex: Vec<([f64; DIM], f64)> = Vec::with_capacity(DIM + 1);
        simplex.push((center, -score(&center)));
        for d in 0..DIM {
            let mut x = center;
            x[d] += step;
            simplex.push((x, -score(&x)));
        }
        while budget > 0 {
            budget -= 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let incumbent = -simplex[0].1;
            if incumbent > best {
                best = incumbent;
                best_x = simplex[0].0;
            }
            history.push(best);
            let spread = simplex[DIM].1 - simplex[0].1;
            if spread <= config.tolerance * simplex[0].1.abs() {
                break;
            }
            let mut centroid = [0.0; DIM];
            for (x, _) in &simplex[..DIM] {
                for d in 0..DIM {
                    centroid[d] += x[d] / DIM as f64;
                }
            }
            let along = |t: f64| -> [f64; DIM] {
                core::array::from_fn(|d| centroid[d] + t * (simplex[DIM].0[d] - centroid[d]))
            };
            let xr = along(-1.0);
            let fr = -score(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = -score(&xe);
                simplex[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[DIM - 1].1 {
                simplex[DIM] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[DIM].1 {
                    let x = along(-0.5);
                    (x, -score(&x))
                } else {
                    let x = along(0.5);
                    (x, -score(&x))
                };
                if fc < simplex[DIM].1.min(fr) {
                    simplex[DIM] = (xc, fc);
                } else {
                    let x_best = simplex[0].0;
                    for vertex in simplex.iter_mut().skip(1) {
                        let x: [f64; DIM] =
                            core::array::from_fn(|d| x_best[d] + 0.5 * (vertex.0[d] - x_best[d]));
                        *vertex = (x, -score(&x));
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if -simplex[0].1 > best {
            best = -simplex[0].1;
            best_x = simplex[0].0;
        }
        center = best_x;
        if budget == 0 {
            break;
        }
    }
    if history.is_empty() {
        history.push(best);
    }
    (best_x, best)
}

fn run_start(
    problem: &Problem,
    config: &SearchConfig,
    x0: [f64; DIM],
    cutoff: usize,
) -> StartOutcome {
    let settings = RateSettings {
        grid_points: config.search_grid_points,
        ..problem.settings
    };
    let mut evaluations = 0usize;
    let mut history = Vec::new();
    let (x, best_score) = nelder_mead(
        |theta| {
            evaluations += 1;
            problem.score(&decode(theta, cutoff), settings)
        },
        x0,
        config,
        &mut history,
    );
    StartOutcome {
        start: decode(&x0, cutoff),
        best: decode(&x, cutoff),
        best_score,
        history,
        evaluations,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizationResult {
    pub spec: SourceSpec,
    /// Full-resolution analysis of the winning parameters.
    pub result: KeyRateResult,
    pub starts: Vec<StartOutcome>,
    pub evaluations: usize,
}

/// Searches for the parameter set with the highest rate.
pub fn optimize(problem: &Problem, config: &SearchConfig) -> Result<OptimizationResult> {
    optimize_with(problem, config, &Sequential)
}

pub fn optimize_with<R: StartRunner>(
    problem: &Problem,
    config: &SearchConfig,
    runner: &R,
) -> Result<OptimizationResult> {
    config.validate()?;
    problem.settings.validate()?;
    let cutoff = config
        .warm_starts
        .first()
        .map_or(default_start().cutoff, |s| s.cutoff);
    let mut points: Vec<[f64; DIM]> = config.warm_starts.iter().map(encode).collect();
    points.push(encode(&default_start()));
    points.extend(quasi_random_starts(
        config.starts.saturating_sub(points.len()),
        config.seed,
    ));
    let starts = runner.run(points.len(), |i| {
        run_start(problem, config, points[i], cutoff)
    });
    let evaluations = starts.iter().map(|s| s.evaluations).sum();
    let winner = starts
        .iter()
        .max_by(|a, b| a.best_score.total_cmp(&b.best_score))
        .ok_or(Error::Numeric("no start completed"))?;
    let spec = winner.best;
    let result = problem.evaluate(&spec)?;
    Ok(OptimizationResult {
        spec,
        result,
        starts,
        evaluations,
    })
}

/// Optimizes along a sequence of problems, warm-starting each from the previous optimum.
pub fn scan<R: StartRunner>(
    problems: &[Problem],
    config: &SearchConfig,
    runner: &R,
) -> Result<Vec<OptimizationResult>> {
    let mut out: Vec<OptimizationResult> = Vec::with_capacity(problems.len());
    for problem in problems {
        let mut cfg = config.clone();
        if let Some(prev) = out.last() {
            cfg.warm_starts = vec![prev.spec];
            cfg.warm_starts.extend(config.warm_starts.iter().copied());
        }
        out.push(optimize_with(problem, &cfg, runner)?);
    }
    Ok(out)
}
