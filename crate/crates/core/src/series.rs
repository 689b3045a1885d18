//! Truncated power series of probability generating functions.
//!
//! `G(z) = sum_n P(n) z^n` is held as its coefficients up to a fixed order.
//! Adding a thermal mode multiplies by `G_BE(z) = 1 / (1 + mu0 (1 - z))`,
//! and subtracting a photon maps `G` to `G'(z) / G'(1)`. This gives a second
//! route to the subsystem law that shares no special-function code with
//! [`crate::distributions`].

use crate::distributions::{check_mu0, Pmf, SubtractionConfig};
use crate::error::{invalid, Error, Result};

/// Negative coefficients down to this size are treated as rounding residue.
const NEGATIVE_RESIDUE: f64 = 1e-10;

/// What is known about the coefficients beyond the retained order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesTail {
    /// All higher coefficients are zero.
    Exact,
    /// The full series is `[1 + mu0 (1 - z)]^(-a)`.
    ThermalFamily { mu0: f64, a: f64 },
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
    tail: SeriesTail,
}

impl TruncatedSeries {
    /// A series with no information about its tail. `coeffs` must be
    /// nonempty.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::with_tail(coeffs, SeriesTail::Unknown)
    }

    pub fn with_tail(coeffs: Vec<f64>, tail: SeriesTail) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "a series needs at least the constant term"));
        }
        Ok(Self { coeffs, tail })
    }

    /// The constant series `1`, the PGF of the vacuum.
    pub fn unit(order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = 1.0;
        Self {
            coeffs,
            tail: SeriesTail::Exact,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tail(&self) -> SeriesTail {
        self.tail
    }

    /// Horner evaluation of the retained polynomial.
    pub fn evaluate(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// Drops coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        let keep = (order + 1).min(self.coeffs.len());
        let tail = match self.tail {
            SeriesTail::Exact if self.coeffs[keep..].iter().any(|&c| c != 0.0) => {
                SeriesTail::Unknown
            }
            t => t,
        };
        Self {
            coeffs: self.coeffs[..keep].to_vec(),
            tail,
        }
    }

    fn is_unit(&self) -> bool {
        self.tail == SeriesTail::Exact
            && self.coeffs[0] == 1.0
            && self.coeffs[1..].iter().all(|&c| c == 0.0)
    }

    fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            tail: SeriesTail::Unknown,
        }
    }

    fn add_constant(&mut self, c: f64) {
        self.coeffs[0] += c;
        self.tail = SeriesTail::Unknown;
    }

    /// `G'(1)` of the full series, as far as it can be recovered.
    pub fn derivative_normalization(&self) -> DerivativeNorm {
        let truncated: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, &c)| n as f64 * c)
            .sum();
        let tail_correction = match self.tail {
            SeriesTail::Exact => Some(0.0),
            SeriesTail::ThermalFamily { mu0, a } => Some(thermal_derivative_tail(
                self.coeffs[self.order()],
                self.order(),
                mu0,
                a,
            )),
            SeriesTail::Unknown => None,
        };
        DerivativeNorm {
            truncated,
            tail_correction,
        }
    }
}

/// `G'(1)` split into the retained part and the tail correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeNorm {
    /// `sum_{n <= order} n c_n`
    pub truncated: f64,
    /// `sum_{n > order} n c_n` when the tail is known; `None` otherwise, in
    /// which case the truncated sum is a lower bound only.
    pub tail_correction: Option<f64>,
}

impl DerivativeNorm {
    pub fn value(&self) -> f64 {
        self.truncated + self.tail_correction.unwrap_or(0.0)
    }
}

/// `sum_{n > order} n c_n` for the thermal-family series, continued from the
/// last retained coefficient with the ratio `rho (a + n)/(n + 1)`.
fn thermal_derivative_tail(last: f64, order: usize, mu0: f64, a: f64) -> f64 {
    let rho = mu0 / (1.0 + mu0);
    let mut c = last;
    let mut n = order as f64;
    let mut sum = 0.0;
    loop {
        c *= rho * (a + n) / (n + 1.0);
        n += 1.0;
        let term = n * c;
        sum += term;
        // n c_n has ratio rho (a + n)/n beyond here; stop once it is a
        // contraction and the geometric remainder is negligible.
        let q = rho * (a + n) / n;
        if q < 1.0 && term * q / (1.0 - q) <= 1e-17 * sum.max(f64::MIN_POSITIVE) {
            return sum + term * q / (1.0 - q);
        }
        if c == 0.0 {
            return sum;
        }
    }
}

/// Taylor coefficients of `[1 + mu0 (1 - z)]^(-1)` up to `order`.
pub fn pgf_bose_einstein(mu0: f64, order: usize) -> Result<TruncatedSeries> {
    check_mu0(mu0)?;
    let rho = mu0 / (1.0 + mu0);
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut c = 1.0 / (1.0 + mu0);
    for _ in 0..=order {
        coeffs.push(c);
        c *= rho;
    }
    TruncatedSeries::with_tail(coeffs, SeriesTail::ThermalFamily { mu0, a: 1.0 })
}

/// PGF of `modes` independent thermal modes, built by repeated
/// multiplication.
pub fn pgf_multimode(mu0: f64, modes: u32, order: usize) -> Result<TruncatedSeries> {
    let single = pgf_bose_einstein(mu0, order)?;
    Ok((0..modes).fold(TruncatedSeries::unit(order), |acc, _| {
        series_multiply(&acc, &single)
    }))
}

/// Cauchy product truncated to the smaller of the two orders.
pub fn series_multiply(a: &TruncatedSeries, b: &TruncatedSeries) -> TruncatedSeries {
    let order = a.order().min(b.order());
    let coeffs = (0..=order)
        .map(|n| (0..=n).map(|i| a.coeffs[i] * b.coeffs[n - i]).sum())
        .collect();
    let tail = match (a.tail, b.tail) {
        _ if a.is_unit() => b.tail,
        _ if b.is_unit() => a.tail,
        (
            SeriesTail::ThermalFamily { mu0: m1, a: a1 },
            SeriesTail::ThermalFamily { mu0: m2, a: a2 },
        ) if m1 == m2 => SeriesTail::ThermalFamily { mu0: m1, a: a1 + a2 },
        (SeriesTail::Exact, SeriesTail::Exact) => {
            let degree = |s: &TruncatedSeries| s.coeffs.iter().rposition(|&c| c != 0.0);
            match (degree(a), degree(b)) {
                (Some(da), Some(db)) if da + db <= order => SeriesTail::Exact,
                (None, _) | (_, None) => SeriesTail::Exact,
                _ => SeriesTail::Unknown,
            }
        }
        _ => SeriesTail::Unknown,
    };
    TruncatedSeries { coeffs, tail }
}

/// Removes one photon: `G'(z) / G'(1)`, truncated to `order - 1`.
///
/// For thermal-family series `G'(1)` includes the analytically continued
/// tail; otherwise only the retained coefficients contribute (see
/// [`TruncatedSeries::derivative_normalization`]).
pub fn subtract_photon(g: &TruncatedSeries) -> Result<TruncatedSeries> {
    if g.order() == 0 {
        return Err(invalid("g", "an order-0 series has no derivative to keep"));
    }
    let norm = g.derivative_normalization().value();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::VanishingDerivative { value: norm });
    }
    let coeffs = (1..=g.order())
        .map(|n| n as f64 * g.coeffs[n] / norm)
        .collect();
    let tail = match g.tail {
        SeriesTail::ThermalFamily { mu0, a } => SeriesTail::ThermalFamily { mu0, a: a + 1.0 },
        SeriesTail::Exact => SeriesTail::Exact,
        SeriesTail::Unknown => SeriesTail::Unknown,
    };
    Ok(TruncatedSeries { coeffs, tail })
}

/// PGF of the `m`-mode subsystem after `K` subtractions from `M` modes:
///
/// `G_BE(z)^m * 2F1(-K, m; M; 1 - G_BE(z))`
///
/// The hypergeometric factor is a degree-`K` polynomial in
/// `w = 1 - G_BE(z)` and is evaluated by Horner's scheme in series
/// arithmetic. Only defined for `m < M`.
pub fn pgf_subtracted_subsystem(cfg: &SubtractionConfig, order: usize) -> Result<TruncatedSeries> {
    if cfg.is_full() {
        return Err(invalid(
            "m",
            "composition requires m < M; use the (K + M)-mode thermal series instead",
        ));
    }
    let thermal = pgf_bose_einstein(cfg.mu0(), order)?;
    let mut w = thermal.scale(-1.0);
    w.add_constant(1.0);

    let k_total = f64::from(cfg.subtracted());
    let observed = f64::from(cfg.observed_modes());
    let total_modes = f64::from(cfg.total_modes());
    let mut poly_coeffs = Vec::with_capacity(cfg.subtracted() as usize + 1);
    let mut c = 1.0;
    poly_coeffs.push(c);
    for j in 0..cfg.subtracted() {
        let jf = f64::from(j);
        c *= (jf - k_total) * (observed + jf) / ((total_modes + jf) * (jf + 1.0));
        poly_coeffs.push(c);
    }

    let mut acc = TruncatedSeries::unit(order).scale(poly_coeffs[poly_coeffs.len() - 1]);
    for &coef in poly_coeffs.iter().rev().skip(1) {
        acc = series_multiply(&acc, &w);
        acc.add_constant(coef);
    }
    let modes = pgf_multimode(cfg.mu0(), cfg.observed_modes(), order)?;
    let mut out = series_multiply(&modes, &acc);
    out.tail = SeriesTail::Unknown;
    Ok(out)
}

/// Reads a PGF series as a probability table. Small negative rounding
/// residue is clamped to zero and `1 - sum` becomes the tail bound.
pub fn coefficients_to_pmf(g: &TruncatedSeries) -> Result<Pmf> {
    let mut probs = Vec::with_capacity(g.coeffs.len());
    for (index, &c) in g.coeffs.iter().enumerate() {
        if c < -NEGATIVE_RESIDUE {
            return Err(Error::NegativeCoefficient { index, value: c });
        }
        probs.push(c.clamp(0.0, 1.0));
    }
    let mass: f64 = probs.iter().sum();
    if mass > 1.0 + NEGATIVE_RESIDUE {
        return Err(Error::Unnormalized {
            mass,
            tail_bound: 0.0,
        });
    }
    Pmf::new(probs, (1.0 - mass).max(0.0))
}
