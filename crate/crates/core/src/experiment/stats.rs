use rand::Rng;

use crate::error::{BanditError, Result};
use crate::rng::rng_from_seed;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Total reward minus what uniform random recommendations earn in
/// expectation over the same number of rounds.
pub fn surplus(rewards: &[f64], baseline: f64) -> f64 {
    rewards.iter().sum::<f64>() - rewards.len() as f64 * baseline
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(samples);
    (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn std_error(samples: &[f64]) -> f64 {
    std_dev(samples) / (samples.len() as f64).sqrt()
}

/// Percentile bootstrap interval for the mean from
/// [`BOOTSTRAP_RESAMPLES`] resamples drawn with a fixed seed.
pub fn confidence_interval(samples: &[f64], level: f64, seed: u64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(BanditError::InvalidParameter {
            name: "samples",
            reason: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(BanditError::InvalidParameter {
            name: "level",
            reason: format!("must lie in (0, 1), got {level}"),
        });
    }
    let n = samples.len();
    let mut rng = rng_from_seed(seed);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
