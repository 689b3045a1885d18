use statrs::function::gamma::gamma_ur;

use crate::distributions::Pmf;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;
pub const MIN_GOF_SAMPLES: usize = 50;

/// A histogram cell after pooling: photon numbers `lo..=hi`, or `lo..` when
/// `hi` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledCell {
    pub lo: u64,
    pub hi: Option<u64>,
    pub observed: u64,
    pub expected: f64,
}

impl PooledCell {
    /// Whether more than one photon number was merged into this cell.
    pub fn is_merged(&self) -> bool {
        self.hi != Some(self.lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub chi2: f64,
    pub dof: u32,
    pub p_value: f64,
    pub pooled_cells: Vec<PooledCell>,
    pub sample_size: usize,
}

impl GofReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Upper tail `P(X > x)` of the chi-squared law with `dof` degrees of
/// freedom.
pub fn chi2_survival(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(f64::from(dof) / 2.0, x / 2.0)
}

/// Observed counts per photon number, with everything at or above
/// `open_from` collected into the last entry.
fn histogram(samples: &[u64], open_from: usize) -> Vec<u64> {
    let mut counts = vec![0u64; open_from + 1];
    for &s in samples {
        counts[(s as usize).min(open_from)] += 1;
    }
    counts
}

/// Pearson chi-squared adequacy test of `samples` against a fully
/// specified `model`.
///
/// The last table entry is made an open cell carrying all remaining model
/// mass. Cells are merged from the high-N side until the open cell expects
/// at least `min_expected` counts, then adjacent low-N cells are merged
/// left to right until each does too. `dof = cells - 1 - fitted_params`.
pub fn chi2_test(
    samples: &[u64],
    model: &Pmf,
    min_expected: f64,
    fitted_params: u32,
) -> Result<GofReport> {
    if samples.len() < MIN_GOF_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_GOF_SAMPLES,
            got: samples.len(),
        });
    }
    if !(min_expected.is_finite() && min_expected > 0.0) {
        return Err(invalid("min_expected", format!("must be positive, got {min_expected}")));
    }
    if model.is_empty() {
        return Err(invalid("model", "empty probability table"));
    }
    let deficit = 1.0 - model.mass();
    if deficit < -1e-9 || deficit > model.tail_bound() + 1e-9 {
        return Err(Error::Unnormalized {
            mass: model.mass(),
            tail_bound: model.tail_bound(),
        });
    }

    let n = samples.len() as f64;
    let open_from = model.len() - 1;
    let counts = histogram(samples, open_from);
    let probs = model.probs();
    let closed_mass: f64 = probs[..open_from].iter().sum();
    let cell_expected = |i: usize| {
        if i == open_from {
            n * (1.0 - closed_mass).max(0.0)
        } else {
            n * probs[i]
        }
    };

    let mut open = PooledCell {
        lo: open_from as u64,
        hi: None,
        observed: counts[open_from],
        expected: cell_expected(open_from),
    };
    while open.expected < min_expected && open.lo > 0 {
        let i = open.lo as usize - 1;
        open.lo -= 1;
        open.observed += counts[i];
        open.expected += n * probs[i];
    }

    let mut cells = Vec::new();
    let mut pending: Option<PooledCell> = None;
    for i in 0..open.lo as usize {
        let cell = match pending.take() {
            Some(mut c) => {
                c.hi = Some(i as u64);
                c.observed += counts[i];
                c.expected += n * probs[i];
                c
            }
            None => PooledCell {
                lo: i as u64,
                hi: Some(i as u64),
                observed: counts[i],
                expected: n * probs[i],
            },
        };
        if cell.expected >= min_expected {
            cells.push(cell);
        } else {
            pending = Some(cell);
        }
    }
    if let Some(rest) = pending {
        open.lo = rest.lo;
        open.observed += rest.observed;
        open.expected += rest.expected;
    }
    cells.push(open);

    let needed = 2 + fitted_params as usize;
    if cells.len() < needed {
        return Err(Error::TooFewCells {
            cells: cells.len(),
            needed,
        });
    }
    let dof = (cells.len() - 1) as u32 - fitted_params;
    let chi2: f64 = cells
        .iter()
        .map(|c| {
            let d = c.observed as f64 - c.expected;
            d * d / c.expected
        })
        .sum();
    Ok(GofReport {
        chi2,
        dof,
        p_value: chi2_survival(chi2, dof),
        pooled_cells: cells,
        sample_size: samples.len(),
    })
}
