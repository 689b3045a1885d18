use statrs::function::gamma::ln_gamma;

use super::hypergeometric::ln_hyp2f1_terminating_positive;
use super::{check_mu0, SubtractionConfig};
use crate::error::{invalid, Result};

/// Largest Polya denominator evaluated in exact integer arithmetic. Below it
/// every count is an exactly representable double, so the final division is
/// correctly rounded.
const EXACT_POLYA_LIMIT: u128 = 1_000_000_000_000_000;

/// Bose-Einstein (geometric) law `mu0^n / (1 + mu0)^(n+1)` of a single
/// thermal mode.
pub fn bose_einstein_pmf(n: u64, mu0: f64) -> Result<f64> {
    check_mu0(mu0)?;
    let nf = n as f64;
    Ok((nf * mu0.ln() - (nf + 1.0) * mu0.ln_1p()).exp())
}

/// Compound Poisson (negative binomial) law with per-mode mean `mu0` and
/// coherence parameter `a`:
///
/// `Gamma(a+n) / (Gamma(a) n!) * mu0^n / (1+mu0)^(n+a)`
///
/// `a` may be any positive real. Evaluated through log-gamma.
pub fn compound_poisson_pmf(n: u64, mu0: f64, a: f64) -> Result<f64> {
    check_mu0(mu0)?;
    check_coherence(a)?;
    Ok(ln_compound_poisson(n, mu0, a).exp())
}

fn check_coherence(a: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid("a", format!("coherence parameter must be positive, got {a}")));
    }
    Ok(())
}

fn ln_compound_poisson(n: u64, mu0: f64, a: f64) -> f64 {
    let nf = n as f64;
    let ln_ratio = if n == 0 {
        0.0
    } else {
        ln_gamma(a + nf) - ln_gamma(a) - ln_gamma(nf + 1.0)
    };
    ln_ratio + nf * mu0.ln() - (nf + a) * mu0.ln_1p()
}

/// Poisson law with mean `mean`; `mean == 0` is the point mass at zero.
pub fn poisson_pmf(n: u64, mean: f64) -> Result<f64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(invalid("mean", format!("must be finite and nonnegative, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    Ok((nf * mean.ln() - mean - ln_gamma(nf + 1.0)).exp())
}

/// A probability held as an exact ratio of counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactRatio {
    pub numer: u128,
    pub denom: u128,
}

impl ExactRatio {
    pub fn to_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

fn binomial_exact(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Ways to put `balls` identical balls into `boxes` distinct boxes.
fn arrangements_exact(balls: u32, boxes: u32) -> Option<u128> {
    if boxes == 0 {
        return Some(u128::from(balls == 0));
    }
    binomial_exact(u128::from(boxes) + u128::from(balls) - 1, u128::from(balls))
}

fn ln_arrangements(balls: u32, boxes: u32) -> f64 {
    if boxes == 0 {
        return if balls == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let (b, x) = (f64::from(balls), f64::from(boxes));
    ln_gamma(x + b) - ln_gamma(b + 1.0) - ln_gamma(x)
}

fn check_polya(k: u32, total: u32, total_modes: u32, observed_modes: u32) -> Result<()> {
    if k > total {
        return Err(invalid("k", format!("{k} exceeds total subtracted {total}")));
    }
    if observed_modes == 0 {
        return Err(invalid("m", "observed mode count must be at least 1"));
    }
    if observed_modes > total_modes {
        return Err(invalid(
            "m",
            format!("observed modes {observed_modes} exceed total modes {total_modes}"),
        ));
    }
    Ok(())
}

/// Exact Polya probability that `k` of `total` subtracted photons come from
/// the `observed_modes` subsystem, as a ratio of arrangement counts.
///
/// Returns `None` when the counts overflow `u128`.
pub fn polya_pmf_exact(
    k: u32,
    total: u32,
    total_modes: u32,
    observed_modes: u32,
) -> Result<Option<ExactRatio>> {
    check_polya(k, total, total_modes, observed_modes)?;
    let ratio = (|| {
        let inside = arrangements_exact(k, observed_modes)?;
        let outside = arrangements_exact(total - k, total_modes - observed_modes)?;
        let denom = arrangements_exact(total, total_modes)?;
        Some(ExactRatio {
            numer: inside.checked_mul(outside)?,
            denom,
        })
    })();
    Ok(ratio)
}

/// Polya probability that `k` of the `total` subtracted photons were taken
/// from the observed `observed_modes` of `total_modes` modes.
///
/// Small arguments are evaluated exactly; large ones through log-gamma.
pub fn polya_pmf(k: u32, total: u32, total_modes: u32, observed_modes: u32) -> Result<f64> {
    if let Some(ratio) = polya_pmf_exact(k, total, total_modes, observed_modes)? {
        if ratio.denom <= EXACT_POLYA_LIMIT {
            return Ok(ratio.to_f64());
        }
    }
    let ln_p = ln_arrangements(k, observed_modes)
        + ln_arrangements(total - k, total_modes - observed_modes)
        - ln_arrangements(total, total_modes);
    Ok(ln_p.exp())
}

/// Closed-form law of the photon number in the observed subsystem.
///
/// For `m < M` this is
///
/// ```text
/// mu0^N / (1+mu0)^(N+m) * Gamma(N+m) / (Gamma(m) Gamma(N+1))
///   * Gamma(M) Gamma(M+K-m) / (Gamma(M-m) Gamma(M+K))
///   * 2F1(-K, N+m; 1-K-M+m; 1/(1+mu0))
/// ```
///
/// with every Gamma ratio taken in log space. For `m == M` the hypergeometric
/// denominator vanishes and the law is compound Poisson with `a = K + M`;
/// for `K == 0` it is compound Poisson with `a = m`, evaluated directly.
pub fn subsystem_pmf(n: u64, cfg: &SubtractionConfig) -> Result<f64> {
    let total_modes = f64::from(cfg.total_modes());
    let observed = f64::from(cfg.observed_modes());
    let subtracted = f64::from(cfg.subtracted());
    let mu0 = cfg.mu0();
    if cfg.is_full() {
        return compound_poisson_pmf(n, mu0, subtracted + total_modes);
    }
    if cfg.subtracted() == 0 {
        return compound_poisson_pmf(n, mu0, observed);
    }
    let nf = n as f64;
    let ln_mu1 = mu0.ln_1p();
    let ln_h = ln_hyp2f1_terminating_positive(
        cfg.subtracted(),
        nf + observed,
        1.0 - subtracted - total_modes + observed,
        (-ln_mu1).exp(),
    )?;
    let ln_prefactor = nf * mu0.ln() - (nf + observed) * ln_mu1 + ln_gamma(nf + observed)
        - ln_gamma(observed)
        - ln_gamma(nf + 1.0)
        + ln_gamma(total_modes)
        - ln_gamma(total_modes - observed)
        + ln_gamma(total_modes + subtracted - observed)
        - ln_gamma(total_modes + subtracted);
    Ok((ln_prefactor + ln_h).exp())
}

/// The same law as [`subsystem_pmf`], summed explicitly over how many of
/// the `K` subtractions hit the subsystem:
///
/// `sum_k polya(k | K, M, m) * compound_poisson(N | mu0, k + m)`
pub fn subsystem_pmf_mixture(n: u64, cfg: &SubtractionConfig) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..=cfg.subtracted() {
        let weight = polya_pmf(k, cfg.subtracted(), cfg.total_modes(), cfg.observed_modes())?;
        if weight == 0.0 {
            continue;
        }
        let a = f64::from(k + cfg.observed_modes());
        acc += weight * compound_poisson_pmf(n, cfg.mu0(), a)?;
    }
    Ok(acc)
}

/// Mean photon number of the subsystem law: `m mu0 (1 + K/M)`.
pub fn theoretical_mean(cfg: &SubtractionConfig) -> f64 {
    let total_modes = f64::from(cfg.total_modes());
    f64::from(cfg.observed_modes()) * cfg.mu0() * (1.0 + f64::from(cfg.subtracted()) / total_modes)
}

/// Second-order correlation of the subsystem law:
/// `(1 + 1/m) / (1 + 1/M) * (1 + 1/(M + K))`.
pub fn theoretical_g2(cfg: &SubtractionConfig) -> f64 {
    let total_modes = f64::from(cfg.total_modes());
    let observed = f64::from(cfg.observed_modes());
    (1.0 + 1.0 / observed) / (1.0 + 1.0 / total_modes)
        * (1.0 + 1.0 / (total_modes + f64::from(cfg.subtracted())))
}
