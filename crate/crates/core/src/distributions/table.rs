//! Truncated probability tables with certified tail bounds.
//!
//! Every law in this crate is a mixture of compound Poisson laws with
//! coherence parameters `a <= a_max` and a common ratio
//! `rho = mu0 / (1 + mu0)`. For each component the term ratio
//! `P(j+1)/P(j) = rho (a + j)/(j + 1)` is bounded for `j > n` by
//! `q_n = rho * max(1, (a_max + n)/(n + 1))`, so once `q_n < 1`
//!
//! `sum_{j >= n} P(j) <= P(n) / (1 - q_n)`.
//!
//! Terms are generated until that majorant is negligible; the stored tail
//! bound is the explicit sum of the dropped terms plus the majorant.

use super::laws::{compound_poisson_pmf, subsystem_pmf};
use super::{check_mu0, Moments, Pmf, SubtractionConfig};
use crate::error::{invalid, Error, Result};

const MAX_TERMS: usize = 20_000_000;

/// Majorant level at which term generation stops, relative to the
/// requested tolerance. Keeps the stored tail bound tight.
const MAJORANT_SLACK: f64 = 1e-4;

fn check_tail_tol(tail_tol: f64) -> Result<()> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(invalid("tail_tol", format!("must lie in (0, 1), got {tail_tol}")));
    }
    Ok(())
}

fn certified_table(
    term: impl Fn(u64) -> Result<f64>,
    a_max: f64,
    mu0: f64,
    tail_tol: f64,
    min_len: usize,
) -> Result<Pmf> {
    check_tail_tol(tail_tol)?;
    let rho = mu0 / (1.0 + mu0);
    let stop_level = tail_tol.min(1e-12) * MAJORANT_SLACK;
    let mut terms: Vec<f64> = Vec::new();
    let remainder = loop {
        let n = terms.len();
        if n >= MAX_TERMS {
            return Err(Error::TailNotConverged {
                tolerance: tail_tol,
                limit: MAX_TERMS,
            });
        }
        let p = term(n as u64)?;
        terms.push(p);
        let nf = n as f64;
        let q = rho * ((a_max + nf) / (nf + 1.0)).max(1.0);
        if q < 1.0 && terms.len() >= min_len {
            // Bounds sum_{j >= n} P(j); the part beyond n is what is dropped.
            let majorant = p / (1.0 - q);
            if majorant < stop_level {
                break (majorant - p).max(0.0);
            }
        }
    };

    // suffix[i] bounds the mass beyond index i.
    let mut suffix = vec![0.0; terms.len()];
    let mut acc = remainder;
    for i in (0..terms.len()).rev() {
        suffix[i] = acc;
        acc += terms[i];
    }
    let last = (0..terms.len())
        .find(|&i| suffix[i] < tail_tol && i + 1 >= min_len)
        .unwrap_or(terms.len() - 1);
    let tail_bound = suffix[last];
    terms.truncate(last + 1);
    Pmf::new(terms, tail_bound)
}

/// Tabulates the subsystem law for `N = 0..=N_max`, where `N_max` is the
/// smallest index whose certified tail mass is below `tail_tol`.
pub fn subsystem_table(cfg: &SubtractionConfig, tail_tol: f64) -> Result<Pmf> {
    subsystem_table_min_len(cfg, tail_tol, 0)
}

/// As [`subsystem_table`], but with at least `min_len` entries.
pub fn subsystem_table_min_len(
    cfg: &SubtractionConfig,
    tail_tol: f64,
    min_len: usize,
) -> Result<Pmf> {
    let a_max = f64::from(cfg.subtracted() + cfg.observed_modes());
    certified_table(|n| subsystem_pmf(n, cfg), a_max, cfg.mu0(), tail_tol, min_len)
}

/// Tabulates the compound Poisson law with coherence parameter `a`.
pub fn compound_poisson_table(mu0: f64, a: f64, tail_tol: f64) -> Result<Pmf> {
    check_mu0(mu0)?;
    certified_table(|n| compound_poisson_pmf(n, mu0, a), a, mu0, tail_tol, 0)
}

/// Exact mean and g2 of the stored part of `pmf`.
///
/// The tail beyond the table is not included; for tables built here its
/// effect on the mean is at most of order `tail_bound * N_max`.
pub fn pmf_moments(pmf: &Pmf) -> Result<Moments> {
    let (mut mean, mut factorial2) = (0.0, 0.0);
    for (n, &p) in pmf.probs().iter().enumerate() {
        let nf = n as f64;
        mean += nf * p;
        factorial2 += nf * (nf - 1.0) * p;
    }
    if mean < 1e-30 {
        return Err(Error::UndefinedG2 { mean });
    }
    Ok(Moments {
        mean,
        g2: factorial2 / (mean * mean),
    })
}

/// Mean and g2 after adding independent Poisson counts of mean `mu_d`:
/// the mean shifts by `mu_d` and the second factorial moment gains
/// `2 mu mu_d + mu_d^2`.
pub fn dark_shifted_moments(moments: Moments, mu_d: f64) -> Moments {
    let mean = moments.mean + mu_d;
    let factorial2 = moments.g2 * moments.mean * moments.mean + 2.0 * moments.mean * mu_d + mu_d * mu_d;
    Moments {
        mean,
        g2: factorial2 / (mean * mean),
    }
}

fn poisson_terms(mean: f64) -> Vec<f64> {
    const STOP: f64 = 1e-18;
    let mut terms = vec![(-mean).exp()];
    loop {
        let j = terms.len() as f64;
        let next = terms[terms.len() - 1] * mean / j;
        terms.push(next);
        let q = mean / (j + 1.0);
        if q < 1.0 && next / (1.0 - q) < STOP {
            return terms;
        }
    }
}

/// Convolves `pmf` with a Poisson law of mean `mu_d` (detector dark counts).
///
/// The Poisson table is cut where its remaining mass is below `1e-18`; that
/// remainder is added to the tail bound of the result.
pub fn convolve_dark_counts(pmf: &Pmf, mu_d: f64) -> Result<Pmf> {
    if !(mu_d.is_finite() && mu_d >= 0.0) {
        return Err(invalid("muD", format!("must be finite and nonnegative, got {mu_d}")));
    }
    if mu_d == 0.0 {
        return Ok(pmf.clone());
    }
    let dark = poisson_terms(mu_d);
    let src = pmf.probs();
    let mut out = vec![0.0; src.len() + dark.len() - 1];
    for (i, &p) in src.iter().enumerate() {
        for (j, &q) in dark.iter().enumerate() {
            out[i + j] += p * q;
        }
    }
    let dark_tail = 1.0 - dark.iter().sum::<f64>();
    Pmf::new(out, pmf.tail_bound() + dark_tail.max(0.0))
}
