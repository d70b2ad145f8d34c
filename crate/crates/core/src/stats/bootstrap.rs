//! Percentile bootstrap for the ratio of mean regularised to mean baseline
//! performance over training runs.
//!
//! Iteration `i` draws from its own ChaCha stream `(seed, i)`, so the
//! interval is identical regardless of how iterations are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Interval, Result, StatsError};
use crate::num::{mean, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub iterations: usize,
    /// Draws with replacement from each run list per iteration.
    pub sample_size: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: 1000,
            sample_size: 3,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BootstrapResult<T> {
    pub interval: Interval<T>,
    /// Iterations dropped because the resampled baseline mean was zero.
    pub discarded: usize,
    pub iterations: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn bootstrap_ar<T: Real>(
    reg_runs: &[T],
    base_runs: &[T],
    config: &BootstrapConfig,
) -> Result<BootstrapResult<T>> {
    if reg_runs.is_empty() || base_runs.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(StatsError::InvalidParameter(format!(
            "level {} outside (0, 1)",
            config.level
        )));
    }
    if config.iterations == 0 || config.sample_size == 0 {
        return Err(StatsError::InvalidParameter(
            "iterations and sample size must be positive".into(),
        ));
    }
    let reg: Vec<f64> = reg_runs.iter().map(|x| x.as_f64()).collect();
    let base: Vec<f64> = base_runs.iter().map(|x| x.as_f64()).collect();
    let k = config.sample_size as f64;

    let draws: Vec<Option<f64>> = (0..config.iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let r = (0..config.sample_size)
                .map(|_| reg[rng.gen_range(0..reg.len())])
                .sum::<f64>()
                / k;
            let b = (0..config.sample_size)
                .map(|_| base[rng.gen_range(0..base.len())])
                .sum::<f64>()
                / k;
            (b != 0.0).then(|| r / b)
        })
        .collect();
    let mut ratios: Vec<f64> = draws.iter().flatten().copied().collect();
    let discarded = draws.len() - ratios.len();
    if ratios.is_empty() {
        return Err(StatsError::InvalidParameter(
            "every bootstrap iteration had a zero baseline mean".into(),
        ));
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let alpha = (1.0 - config.level) / 2.0;
    let base_mean = mean(base_runs).expect("non-empty");
    let point = if base_mean == T::zero() {
        T::nan()
    } else {
        mean(reg_runs).expect("non-empty") / base_mean
    };
    Ok(BootstrapResult {
        interval: Interval {
            lower: T::lit(quantile(&ratios, alpha)),
            upper: T::lit(quantile(&ratios, 1.0 - alpha)),
            level: T::lit(config.level),
            point,
        },
        discarded,
        iterations: config.iterations,
    })
}
