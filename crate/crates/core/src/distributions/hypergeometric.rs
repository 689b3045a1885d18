//! Terminating Gauss hypergeometric series `2F1(-n, b; c; x)`.
//!
//! With a nonpositive integer first parameter the series is a polynomial of
//! degree `n` in `x`. Terms are generated by the ratio
//!
//! `t_{j+1} / t_j = (j - n)(b + j) / ((c + j)(j + 1)) * x`
//!
//! and summed in ascending order. The (n+1)-th ratio is never formed, so a
//! denominator `c + n = 0` does not matter.

use crate::error::{Error, Result};

fn check_denominators(n: u32, c: f64) -> Result<()> {
    for j in 0..n {
        if c + f64::from(j) == 0.0 {
            return Err(Error::ZeroPochhammer { term: j + 1 });
        }
    }
    Ok(())
}

/// Evaluates `2F1(-n, b; c; x)` as the `n + 1` term sum.
///
/// Fails when one of the Pochhammer factors `c, c+1, ..., c+n-1` vanishes.
pub fn hyp2f1_terminating(n: u32, b: f64, c: f64, x: f64) -> Result<f64> {
    check_denominators(n, c)?;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 0..n {
        let jf = f64::from(j);
        term *= (jf - f64::from(n)) * (b + jf) / ((c + jf) * (jf + 1.0)) * x;
        sum += term;
    }
    Ok(sum)
}

/// Natural log of `2F1(-n, b; c; x)` for parameters where every term is
/// nonnegative, evaluated in log space so that large `b` or `n` cannot
/// overflow.
///
/// This is the regime of the subsystem photon-number law: the signs of
/// `(-n)_j` and `(c)_j` cancel when `c + n - 1 < 0`, and `b, x > 0`.
pub(crate) fn ln_hyp2f1_terminating_positive(n: u32, b: f64, c: f64, x: f64) -> Result<f64> {
    check_denominators(n, c)?;
    let ln_x = x.ln();
    let mut ln_terms = Vec::with_capacity(n as usize + 1);
    let mut ln_term = 0.0;
    ln_terms.push(0.0);
    for j in 0..n {
        let jf = f64::from(j);
        let ratio = (jf - f64::from(n)) * (b + jf) / ((c + jf) * (jf + 1.0));
        if ratio < 0.0 {
            return Err(Error::NegativeTerm { term: j + 1 });
        }
        ln_term += ratio.ln() + ln_x;
        ln_terms.push(ln_term);
    }
    let max = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = ln_terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + scaled.ln())
}
