//! Thread-pool execution of optimizer starts.

use mdiqkd_core::optimizer::{StartOutcome, StartRunner};
use rayon::prelude::*;

use crate::CliError;

/// Runs starts on a dedicated rayon pool; results keep start order.
pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    /// `threads = None` uses every available core.
    pub fn new(threads: Option<usize>) -> Result<Self, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(CliError::validation("--threads must be at least 1"));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
        Ok(RayonRunner { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl StartRunner for RayonRunner {
    fn run<F>(&self, count: usize, job: F) -> Vec<StartOutcome>
    where
        F: Fn(usize) -> StartOutcome + Sync + Send,
    {
        self.pool
            .install(|| (0..count).into_par_iter().map(&job).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdiqkd_core::optimizer::{optimize, optimize_with, Problem, SearchConfig};
    use mdiqkd_core::{ChannelParams, DeviceLine, FluctuationPolicy, RateMethod, RateSettings};

    #[test]
    fn parallel_and_sequential_agree() {
        let problem = Problem {
            params: ChannelParams::line(DeviceLine::B, 50.0),
            n_total: 1_000_000_000,
            policy: FluctuationPolicy::reference_normal(),
            method: RateMethod::ThisWork,
            settings: RateSettings::default(),
        };
        let cfg = SearchConfig {
            starts: 3,
            max_iterations: 40,
            ..SearchConfig::default()
        };
        let a = optimize(&problem, &cfg).unwrap();
        let b = optimize_with(&problem, &cfg, &RayonRunner::new(Some(2)).unwrap()).unwrap();
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.result.raw_rate.to_bits(), b.result.raw_rate.to_bits());
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(RayonRunner::new(Some(0)).is_err());
    }
}
