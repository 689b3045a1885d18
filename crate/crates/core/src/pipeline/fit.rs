//! Maximum-likelihood fit of the per-mode mean `mu0`.

use crate::distributions::{convolve_dark_counts, subsystem_table_min_len, SubtractionConfig};
use crate::error::{Error, Result};

use super::gof::MIN_GOF_SAMPLES;

const LOWER_MU0: f64 = 1e-6;
const GRID_POINTS: usize = 41;
const LOG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchBoundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mu0Fit {
    pub mu0_hat: f64,
    pub loglik: f64,
    /// Set when the likelihood kept increasing up to an end of the search
    /// interval, so no interior maximum was bracketed.
    pub boundary: Option<SearchBoundary>,
}

struct Likelihood<'a> {
    counts: &'a [u64],
    shape: SubtractionConfig,
    mu_d: f64,
}

impl Likelihood<'_> {
    fn at(&self, mu0: f64) -> Result<f64> {
        let cfg = self.shape.with_mu0(mu0)?;
        let table = subsystem_table_min_len(&cfg, 1e-13, self.counts.len())?;
        let model = convolve_dark_counts(&table, self.mu_d)?;
        Ok(self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(n, &c)| c as f64 * model.get(n).ln())
            .sum())
    }
}

/// Fits `mu0` of the dark-count-convolved subsystem law to `samples`.
///
/// The log-likelihood is scanned on a log-spaced grid over
/// `[1e-6, upper]`, where `upper` is generous compared to the moment
/// estimate, and the best interior grid cell is refined by golden-section
/// search in `ln mu0`.
pub fn fit_mu0(
    samples: &[u64],
    total_modes: u32,
    observed_modes: u32,
    subtracted: u32,
    mu_d: f64,
) -> Result<Mu0Fit> {
    if samples.len() < MIN_GOF_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_GOF_SAMPLES,
            got: samples.len(),
        });
    }
    let shape = SubtractionConfig::new(total_modes, observed_modes, subtracted, 1.0)?;
    let max = *samples.iter().max().expect("nonempty") as usize;
    let mut counts = vec![0u64; max + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let lik = Likelihood {
        counts: &counts,
        shape,
        mu_d,
    };

    let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
    let per_mode = f64::from(observed_modes) * (1.0 + f64::from(subtracted) / f64::from(total_modes));
    let moment_guess = ((mean - mu_d).max(0.0) / per_mode).max(1e-3);
    let (lo, hi) = (LOWER_MU0.ln(), (20.0 * moment_guess).max(10.0).ln());

    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let values = grid
        .iter()
        .map(|&t| lik.at(t.exp()))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    if best == 0 || best == GRID_POINTS - 1 {
        return Ok(Mu0Fit {
            mu0_hat: if best == 0 { LOWER_MU0 } else { grid[best].exp() },
            loglik: values[best],
            boundary: Some(if best == 0 {
                SearchBoundary::Lower
            } else {
                SearchBoundary::Upper
            }),
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = lik.at(c.exp())?;
    let mut fd = lik.at(d.exp())?;
    while b - a > LOG_TOLERANCE {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = lik.at(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = lik.at(d.exp())?;
        }
    }
    let t = 0.5 * (a + b);
    Ok(Mu0Fit {
        mu0_hat: t.exp(),
        loglik: lik.at(t.exp())?,
        boundary: None,
    })
}
