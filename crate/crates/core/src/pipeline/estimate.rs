use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::substream;

/// Sample mean and g2 with bootstrap standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub mu_hat: f64,
    pub mu_se: f64,
    /// `None` when the sample mean is zero.
    pub g2_hat: Option<f64>,
    pub g2_se: Option<f64>,
    pub sample_size: usize,
}

struct Sums {
    first: f64,
    factorial2: f64,
}

impl Sums {
    fn mean(&self, n: f64) -> f64 {
        self.first / n
    }

    fn g2(&self, n: f64) -> Option<f64> {
        let mean = self.first / n;
        (mean > 0.0).then(|| (self.factorial2 / n) / (mean * mean))
    }
}

fn sums(values: impl Iterator<Item = u64>) -> Sums {
    values.fold(
        Sums {
            first: 0.0,
            factorial2: 0.0,
        },
        |acc, v| {
            let x = v as f64;
            Sums {
                first: acc.first + x,
                factorial2: acc.factorial2 + x * (x - 1.0),
            }
        },
    )
}

/// Plug-in `g2 = (<N^2> - <N>) / <N>^2`, or `None` for an all-zero sample.
pub fn sample_g2(samples: &[u64]) -> Option<f64> {
    sums(samples.iter().copied()).g2(samples.len() as f64)
}

fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Estimates the mean and g2 of `samples`; standard errors come from
/// `bootstrap_reps` nonparametric resamples, resample `r` drawing from
/// substream `r` of `seed`.
pub fn estimate_moments(samples: &[u64], bootstrap_reps: usize, seed: u64) -> Result<EstimateReport> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if bootstrap_reps < 2 {
        return Err(invalid("bootstrap_reps", "need at least 2 resamples"));
    }
    let n = samples.len();
    let nf = n as f64;
    let full = sums(samples.iter().copied());
    let mu_hat = full.mean(nf);
    let g2_hat = full.g2(nf);

    let reps: Vec<(f64, Option<f64>)> = (0..bootstrap_reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r);
            let s = sums((0..n).map(|_| samples[rng.random_range(0..n)]));
            (s.mean(nf), s.g2(nf))
        })
        .collect();
    let means: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let g2s: Vec<f64> = reps.iter().filter_map(|r| r.1).collect();
    Ok(EstimateReport {
        mu_hat,
        mu_se: std_dev(&means).unwrap_or(0.0),
        g2_hat,
        g2_se: g2_hat.and_then(|_| std_dev(&g2s)),
        sample_size: n,
    })
}
