//! The work behind each subcommand, independent of argument parsing.

use std::fs;
use std::io::Write;
use std::path::Path;

use mdiqkd_core::keyrate::{rate_for_model, RateModel};
use mdiqkd_core::optimizer::{optimize_with, scan, OptimizationResult, Problem};
use mdiqkd_core::{simulate_observed, ObservedStats, RateMethod, SourceSpec};
use serde::{Deserialize, Serialize};

use crate::config::{n_total_from, RunConfig};
use crate::formats::{stats_from_json, stats_to_json, CurveRow, Meta, RateReport, ReportFile};
use crate::parallel::RayonRunner;
use crate::CliError;

/// A validated configuration together with its provenance and thread pool.
pub struct Session {
    pub config: RunConfig,
    pub meta: Meta,
    pub runner: RayonRunner,
}

impl Session {
    pub fn new(config: RunConfig, threads: Option<usize>) -> Result<Self, CliError> {
        config.validate()?;
        let meta = Meta::new(config.digest());
        Ok(Session {
            config,
            meta,
            runner: RayonRunner::new(threads)?,
        })
    }

    fn explicit_spec(&self, command: &str) -> Result<SourceSpec, CliError> {
        self.config.source.explicit().copied().ok_or_else(|| {
            CliError::validation(format!("{command} needs explicit source parameters"))
        })
    }

    fn problem(
        &self,
        distance_km: f64,
        n_total: u64,
        method: RateMethod,
    ) -> Result<Problem, CliError> {
        Ok(Problem {
            params: self.config.device.at(distance_km),
            n_total,
            policy: self.config.fluctuation()?,
            method,
            settings: self.config.rate_settings(),
        })
    }

    fn report(
        &self,
        problem: &Problem,
        spec: SourceSpec,
        result: mdiqkd_core::KeyRateResult,
    ) -> RateReport {
        RateReport {
            distance_km: problem.params.distance_km,
            n_total: problem.n_total,
            method: problem.method,
            spec,
            device: problem.params,
            policy: self.config.policy,
            bits_per_second: result.rate_per_pair * self.config.repetition_rate_hz,
            result,
        }
    }

    fn optimum_report(&self, problem: &Problem, opt: OptimizationResult) -> RateReport {
        self.report(problem, opt.spec, opt.result)
    }

    /// Rate at one point: evaluated at the explicit parameters or optimized.
    fn solve(&self, problem: &Problem) -> Result<RateReport, CliError> {
        match self.config.source.explicit() {
            Some(spec) => Ok(self.report(problem, *spec, problem.evaluate(spec)?)),
            None => {
                let opt = optimize_with(problem, &self.config.search, &self.runner)?;
                Ok(self.optimum_report(problem, opt))
            }
        }
    }

    /// Solves a chain of problems, warm-starting each optimization from the previous one.
    fn solve_chain(&self, problems: &[Problem]) -> Result<Vec<RateReport>, CliError> {
        match self.config.source.explicit() {
            Some(_) => problems.iter().map(|p| self.solve(p)).collect(),
            None => {
                let results = scan(problems, &self.config.search, &self.runner)?;
                Ok(problems
                    .iter()
                    .zip(results)
                    .map(|(p, r)| self.optimum_report(p, r))
                    .collect())
            }
        }
    }

    pub fn simulate(&self) -> Result<serde_json::Value, CliError> {
        let spec = self.explicit_spec("simulate")?;
        let params = self.config.device.at(self.config.distance_km);
        let stats = simulate_observed(
            &spec,
            &params,
            self.config.pulses()?,
            self.config.mode,
            self.config.seed,
        )?;
        Ok(stats_to_json(&stats, &self.meta))
    }

    pub fn keyrate(&self) -> Result<ReportFile, CliError> {
        let spec = self.explicit_spec("keyrate")?;
        let params = self.config.device.at(self.config.distance_km);
        let stats: ObservedStats = match &self.config.stats {
            Some(path) => stats_from_json(&read(path)?)?,
            None => simulate_observed(
                &spec,
                &params,
                self.config.pulses()?,
                self.config.mode,
                self.config.seed,
            )?,
        };
        let n_total = stats.sources.values().map(|s| s.pulses).sum();
        let model = RateModel::new(
            &stats,
            &spec,
            &params,
            self.config.fluctuation()?,
            self.config.rate_settings(),
        )?;
        let mut reports = Vec::new();
        for &method in &self.config.methods {
            let problem = self.problem(self.config.distance_km, n_total, method)?;
            reports.push(self.report(&problem, spec, rate_for_model(&model, method)?));
        }
        Ok(ReportFile {
            meta: self.meta.clone(),
            reports,
        })
    }

    pub fn optimize(&self) -> Result<OptimizeFile, CliError> {
        let mut reports = Vec::new();
        let mut searches = Vec::new();
        for &method in &self.config.methods {
            let problem = self.problem(self.config.distance_km, self.config.pulses()?, method)?;
            let opt = optimize_with(&problem, &self.config.search, &self.runner)?;
            searches.push(SearchSummary {
                method,
                evaluations: opt.evaluations,
                start_scores: opt.starts.iter().map(|s| s.best_score).collect(),
            });
            reports.push(self.optimum_report(&problem, opt));
        }
        Ok(OptimizeFile {
            meta: self.meta.clone(),
            reports,
            searches,
        })
    }

    pub fn scan_distance(&self, distances: &[f64]) -> Result<Vec<CurveRow>, CliError> {
        if distances.is_empty() {
            return Err(CliError::validation("scan needs at least one distance"));
        }
        let n_total = self.config.pulses()?;
        let mut rows = Vec::new();
        for &method in &self.config.methods {
            let problems = distances
                .iter()
                .map(|&d| self.problem(d, n_total, method))
                .collect::<Result<Vec<_>, _>>()?;
            rows.extend(
                self.solve_chain(&problems)?
                    .iter()
                    .map(|r| CurveRow::from_report(r, &self.meta)),
            );
        }
        Ok(rows)
    }

    pub fn scan_ntotal(&self, nt_list: &[f64]) -> Result<Vec<CurveRow>, CliError> {
        if nt_list.is_empty() {
            return Err(CliError::validation("ntscan needs a non-empty N_t list"));
        }
        let mut rows = Vec::new();
        for &method in &self.config.methods {
            let problems = nt_list
                .iter()
                .map(|&nt| {
                    self.problem(
                        self.config.distance_km,
                        n_total_from(nt).map_err(CliError::validation)?,
                        method,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.extend(
                self.solve_chain(&problems)?
                    .iter()
                    .map(|r| CurveRow::from_report(r, &self.meta)),
            );
        }
        Ok(rows)
    }

    /// All three analyses at the configured point.
    pub fn compare(&self) -> Result<Vec<CurveRow>, CliError> {
        let mut rows = Vec::new();
        for method in RateMethod::ALL {
            let problem = self.problem(self.config.distance_km, self.config.pulses()?, method)?;
            rows.push(CurveRow::from_report(&self.solve(&problem)?, &self.meta));
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSummary {
    pub method: RateMethod,
    pub evaluations: usize,
    pub start_scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeFile {
    pub meta: Meta,
    pub reports: Vec<RateReport>,
    pub searches: Vec<SearchSummary>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

/// Writes to the given file, or to stdout.
pub fn emit(out: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}
