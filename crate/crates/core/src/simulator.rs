//! Monte Carlo model of the subtraction experiment.
//!
//! Each trial draws `M` independent thermal modes, routes every photon of
//! every mode to the subtraction detector with probability `r`, and keeps
//! the trial only if the subtraction detector saw exactly `K` photons in
//! total. The photon number transmitted in the first `m` modes is recorded.
//!
//! Thinning a geometric law keeps it geometric, and conditioning on the
//! reflected count `k` of a mode leaves the transmitted count compound
//! Poisson with `a = k + 1` and per-mode mean `mu_in (1 - r) / (1 + mu_in r)`.
//! Accepted samples therefore follow the subsystem law at that mean for any
//! `r`; see [`effective_mu0`].

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::distributions::{Pmf, SubtractionConfig};
use crate::error::{invalid, Error, Result};
use crate::pipeline::{Bin, BinnedTrace};
use crate::rng::substream;

const ATTEMPTS_PER_BATCH: u64 = 1 << 15;
const BATCHES_PER_ROUND: u64 = 8;
const BINS_PER_CHUNK: usize = 1 << 16;
pub const DEFAULT_MIN_ACCEPTANCE: f64 = 1e-6;

/// Inverse-CDF sampler for the Bose-Einstein law of mean `mu`.
#[derive(Debug, Clone, Copy)]
struct ThermalSource {
    ln_ratio: f64,
}

impl ThermalSource {
    fn new(mu: f64) -> Self {
        Self {
            ln_ratio: (mu / (1.0 + mu)).ln(),
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        // P(n >= j) = rho^j, so n = floor(ln U / ln rho) with U in (0, 1].
        let u = 1.0 - rng.random::<f64>();
        (u.ln() / self.ln_ratio).floor() as u64
    }
}

/// Draws a photon number from a thermal mode of mean `mu > 0`.
pub fn sample_thermal<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    ThermalSource::new(mu).sample(rng)
}

/// Splits `n` photons on a beam splitter of reflectivity `r`, returning
/// `(reflected, transmitted)`.
pub fn binomial_thin<R: Rng + ?Sized>(n: u64, r: f64, rng: &mut R) -> (u64, u64) {
    let reflected = if n <= 32 {
        (0..n).filter(|_| rng.random::<f64>() < r).count() as u64
    } else {
        Binomial::new(n, r)
            .expect("reflectivity within [0, 1]")
            .sample(rng)
    };
    (reflected, n - reflected)
}

/// Per-mode mean of the transmitted light once the reflected count is
/// known: `mu_in (1 - r) / (1 + mu_in r)`. Tends to `mu_in (1 - r)` as
/// `r -> 0`.
pub fn effective_mu0(mu_in: f64, reflectivity: f64) -> f64 {
    mu_in * (1.0 - reflectivity) / (1.0 + mu_in * reflectivity)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub total_modes: u32,
    pub observed_modes: u32,
    pub k_condition: u32,
    /// Mean photons per mode before the beam splitter.
    pub mu_in: f64,
    pub reflectivity: f64,
    /// Number of accepted samples to collect.
    pub trials: usize,
    pub seed: u64,
    /// Give up once the acceptance rate is known to be below this.
    pub min_acceptance: f64,
}

impl SimConfig {
    pub fn new(
        total_modes: u32,
        observed_modes: u32,
        k_condition: u32,
        mu_in: f64,
        reflectivity: f64,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            total_modes,
            observed_modes,
            k_condition,
            mu_in,
            reflectivity,
            trials,
            seed,
            min_acceptance: DEFAULT_MIN_ACCEPTANCE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        SubtractionConfig::new(self.total_modes, self.observed_modes, self.k_condition, self.mu_in)
            .map_err(|e| match e {
                Error::InvalidParameter { name: "mu0", reason } => Error::InvalidParameter {
                    name: "mu_in",
                    reason,
                },
                e => e,
            })?;
        if !(self.reflectivity > 0.0 && self.reflectivity < 1.0) {
            return Err(invalid("r", format!("reflectivity must lie in (0, 1), got {}", self.reflectivity)));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one accepted trial"));
        }
        if !(self.min_acceptance > 0.0 && self.min_acceptance <= 1.0) {
            return Err(invalid("min_acceptance", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn effective_mu0(&self) -> f64 {
        effective_mu0(self.mu_in, self.reflectivity)
    }

    /// The analytic law the accepted samples follow.
    pub fn model(&self) -> Result<SubtractionConfig> {
        SubtractionConfig::new(
            self.total_modes,
            self.observed_modes,
            self.k_condition,
            self.effective_mu0(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRun {
    /// Transmitted photon number of the first `m` modes, per accepted trial.
    pub samples: Vec<u64>,
    /// Photons subtracted from the first `m` modes, per accepted trial.
    pub subsystem_subtracted: Vec<u32>,
    pub attempts: u64,
    pub accepted: u64,
}

impl ConditionalRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.attempts as f64
    }
}

struct Batch {
    samples: Vec<u64>,
    subtracted: Vec<u32>,
}

fn run_batch(cfg: &SimConfig, source: ThermalSource, stream: u64) -> Batch {
    let mut rng = substream(cfg.seed, stream);
    let k_target = u64::from(cfg.k_condition);
    let observed = cfg.observed_modes;
    let mut batch = Batch {
        samples: Vec::new(),
        subtracted: Vec::new(),
    };
    'trial: for _ in 0..ATTEMPTS_PER_BATCH {
        let (mut reflected_total, mut n_obs, mut k_obs) = (0u64, 0u64, 0u64);
        for mode in 0..cfg.total_modes {
            let n = source.sample(&mut rng);
            let (reflected, transmitted) = binomial_thin(n, cfg.reflectivity, &mut rng);
            reflected_total += reflected;
            if reflected_total > k_target {
                continue 'trial;
            }
            if mode < observed {
                n_obs += transmitted;
                k_obs += reflected;
            }
        }
        if reflected_total == k_target {
            batch.samples.push(n_obs);
            batch.subtracted.push(k_obs as u32);
        }
    }
    batch
}

/// Runs the post-selected beam-splitter experiment until `cfg.trials`
/// samples are accepted.
///
/// Trials run in rounds of fixed-size batches; batch `b` uses substream `b`
/// of `cfg.seed` and batches are merged in index order, so the output
/// depends only on the configuration.
pub fn run_conditional(cfg: &SimConfig) -> Result<ConditionalRun> {
    cfg.validate()?;
    let source = ThermalSource::new(cfg.mu_in);
    let mut run = ConditionalRun {
        samples: Vec::with_capacity(cfg.trials),
        subsystem_subtracted: Vec::with_capacity(cfg.trials),
        attempts: 0,
        accepted: 0,
    };
    let floor_check = (10.0 / cfg.min_acceptance).ceil() as u64;
    let mut next_stream = 0u64;
    while run.samples.len() < cfg.trials {
        let batches: Vec<Batch> = (next_stream..next_stream + BATCHES_PER_ROUND)
            .into_par_iter()
            .map(|b| run_batch(cfg, source, b))
            .collect();
        next_stream += BATCHES_PER_ROUND;
        for b in batches {
            run.attempts += ATTEMPTS_PER_BATCH;
            run.accepted += b.samples.len() as u64;
            run.samples.extend(b.samples);
            run.subsystem_subtracted.extend(b.subtracted);
        }
        if run.attempts >= floor_check && run.acceptance_rate() < cfg.min_acceptance {
            return Err(Error::AcceptanceTooLow {
                rate: run.acceptance_rate(),
                floor: cfg.min_acceptance,
                attempts: run.attempts,
            });
        }
    }
    run.samples.truncate(cfg.trials);
    run.subsystem_subtracted.truncate(cfg.trials);
    Ok(run)
}

/// Inverse-CDF sampler over a probability table. Mass beyond the table is
/// assigned to its last entry.
#[derive(Debug, Clone)]
pub struct PmfSampler {
    cdf: Vec<f64>,
}

impl PmfSampler {
    pub fn new(pmf: &Pmf) -> Result<Self> {
        let deficit = 1.0 - pmf.mass();
        if pmf.is_empty() || deficit.abs() > pmf.tail_bound() + 1e-9 {
            return Err(Error::Unnormalized {
                mass: pmf.mass(),
                tail_bound: pmf.tail_bound(),
            });
        }
        let cdf = pmf
            .probs()
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) as u64
    }
}

/// Single inverse-CDF draw from `pmf`.
pub fn sample_pmf<R: Rng + ?Sized>(pmf: &Pmf, rng: &mut R) -> Result<u64> {
    Ok(PmfSampler::new(pmf)?.sample(rng))
}

/// Parameters of a synthetic detector record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    /// Per-mode mean of the subsystem law the record should realize, i.e.
    /// the transmitted mean given the subtraction count.
    pub mu0: f64,
    /// Poisson dark-count mean per bin on the observation detector.
    pub mu_d_per_mode: f64,
    pub tau_ns: u64,
    /// Thinning period the record is meant to be analyzed with. Bins are
    /// drawn independently, so this is recorded as metadata only.
    pub thin_period_bins: usize,
    pub n_bins: usize,
    /// Probability that a photon is routed to the subtraction detector.
    pub p_subtract: f64,
    pub seed: u64,
}

impl TraceConfig {
    /// Mean photon number per bin before the subtraction tap, chosen so that
    /// [`effective_mu0`] of it equals `mu0`.
    pub fn source_mean(&self) -> Result<f64> {
        let denom = 1.0 - self.p_subtract * (1.0 + self.mu0);
        if denom.is_nan() || denom <= 0.0 {
            return Err(invalid(
                "p_subtract",
                format!(
                    "p_subtract {} is too large to realize mu0 {}; need p < 1/(1+mu0)",
                    self.p_subtract, self.mu0
                ),
            ));
        }
        Ok(self.mu0 / denom)
    }

    pub fn validate(&self) -> Result<()> {
        crate::distributions::check_mu0(self.mu0)?;
        if !(self.mu_d_per_mode.is_finite() && self.mu_d_per_mode >= 0.0) {
            return Err(invalid("muD", "dark-count mean must be nonnegative"));
        }
        if self.tau_ns == 0 {
            return Err(invalid("tau_ns", "bin width must be positive"));
        }
        if self.thin_period_bins == 0 {
            return Err(invalid("thin_period_bins", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_subtract) {
            return Err(invalid("p_subtract", "must lie in [0, 1]"));
        }
        self.source_mean().map(|_| ())
    }
}

/// Generates `n_bins` independent bins of `(k, n)` photocounts.
///
/// Each bin draws a thermal photon number, sends each photon to the
/// subtraction channel with probability `p_subtract`, and adds Poisson dark
/// counts to the observation channel. Chunk `c` of bins uses substream `c`.
pub fn synth_experiment_trace(cfg: &TraceConfig) -> Result<BinnedTrace> {
    cfg.validate()?;
    let source = ThermalSource::new(cfg.source_mean()?);
    let dark = (cfg.mu_d_per_mode > 0.0)
        .then(|| Poisson::new(cfg.mu_d_per_mode).expect("validated dark-count mean"));
    let n_chunks = cfg.n_bins.div_ceil(BINS_PER_CHUNK);
    let chunks: Vec<Vec<Bin>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(cfg.seed, c as u64);
            let len = BINS_PER_CHUNK.min(cfg.n_bins - c * BINS_PER_CHUNK);
            (0..len)
                .map(|_| {
                    let photons = source.sample(&mut rng);
                    let (k, transmitted) = binomial_thin(photons, cfg.p_subtract, &mut rng);
                    let dark_counts = dark.as_ref().map_or(0, |d| d.sample(&mut rng) as u64);
                    Bin {
                        k: k as u32,
                        n: (transmitted + dark_counts) as u32,
                    }
                })
                .collect()
        })
        .collect();
    let mut trace = BinnedTrace::new(chunks.concat(), cfg.tau_ns)?;
    let meta = [
        ("mu0", cfg.mu0.to_string()),
        ("muD_per_mode", cfg.mu_d_per_mode.to_string()),
        ("p_subtract", cfg.p_subtract.to_string()),
        ("thin_period_bins", cfg.thin_period_bins.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    trace
        .meta
        .extend(meta.into_iter().map(|(k, v)| (k.to_string(), v)));
    Ok(trace)
}
