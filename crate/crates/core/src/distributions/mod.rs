//! Photon-number laws of thermal light before and after conditional
//! photon subtraction.
//!
//! The central object is the law of the total photon number `N` observed in
//! `m` of `M` thermal modes, each with mean `mu0`, after exactly `K` photons
//! were removed from the whole `M`-mode field. It is available both as a
//! closed form ([`subsystem_pmf`]) and as an explicit Polya mixture of
//! compound Poisson laws ([`subsystem_pmf_mixture`]).

mod hypergeometric;
mod laws;
mod table;

pub use hypergeometric::hyp2f1_terminating;
pub use laws::{
    bose_einstein_pmf, compound_poisson_pmf, poisson_pmf, polya_pmf, polya_pmf_exact,
    subsystem_pmf, subsystem_pmf_mixture, theoretical_g2, theoretical_mean, ExactRatio,
};
pub use table::{
    compound_poisson_table, convolve_dark_counts, dark_shifted_moments, pmf_moments, subsystem_table,
    subsystem_table_min_len,
};

use crate::error::{invalid, Result};

/// Parameters of a K-photon-subtracted M-mode thermal field observed
/// through m of its modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubtractionConfig {
    total_modes: u32,
    observed_modes: u32,
    subtracted: u32,
    mu0: f64,
}

impl SubtractionConfig {
    pub fn new(total_modes: u32, observed_modes: u32, subtracted: u32, mu0: f64) -> Result<Self> {
        if observed_modes == 0 {
            return Err(invalid("m", "observed mode count must be at least 1"));
        }
        if observed_modes > total_modes {
            return Err(invalid(
                "m",
                format!("observed modes {observed_modes} exceed total modes {total_modes}"),
            ));
        }
        check_mu0(mu0)?;
        Ok(Self {
            total_modes,
            observed_modes,
            subtracted,
            mu0,
        })
    }

    /// Total number of thermal modes `M`.
    pub fn total_modes(&self) -> u32 {
        self.total_modes
    }

    /// Number of observed modes `m`.
    pub fn observed_modes(&self) -> u32 {
        self.observed_modes
    }

    /// Number of photons `K` subtracted from all `M` modes.
    pub fn subtracted(&self) -> u32 {
        self.subtracted
    }

    /// Mean photon number per mode before subtraction.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn with_mu0(&self, mu0: f64) -> Result<Self> {
        Self::new(self.total_modes, self.observed_modes, self.subtracted, mu0)
    }

    /// Whether the whole field is observed (`m == M`).
    pub fn is_full(&self) -> bool {
        self.observed_modes == self.total_modes
    }
}

pub(crate) fn check_mu0(mu0: f64) -> Result<()> {
    if !(mu0.is_finite() && mu0 > 0.0) {
        return Err(invalid("mu0", format!("must be finite and positive, got {mu0}")));
    }
    Ok(())
}

/// A probability mass function over `N = 0..len`, plus a certified upper
/// bound on the probability mass beyond the last stored index.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl Pmf {
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(invalid("probs", format!("entry {i} = {p} is outside [0, 1]")));
        }
        if !(tail_bound.is_finite() && tail_bound >= 0.0) {
            return Err(invalid("tail_bound", format!("must be nonnegative, got {tail_bound}")));
        }
        Ok(Self { probs, tail_bound })
    }

    /// The point mass at zero.
    pub fn vacuum() -> Self {
        Self {
            probs: vec![1.0],
            tail_bound: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of `n`, zero beyond the stored range.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Sum of the stored probabilities.
    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// Mean and normalized second-order correlation of a photon-number law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// `(<N^2> - <N>) / <N>^2`
    pub g2: f64,
}
