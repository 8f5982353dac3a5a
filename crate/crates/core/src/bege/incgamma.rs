//! Regularised lower incomplete gamma function `P(a, x)`.
//!
//! Uses the power series for `x < a + 1` and a Lentz continued fraction for
//! the upper function otherwise. The blocked form iterates every lane of one
//! branch together and stops once the largest relative update is below
//! tolerance.

use libm::lgamma;

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-14;
pub const MAX_TERMS: usize = 500;
const TINY: f64 = 1e-300;

#[inline]
fn log_prefactor(a: f64, x: f64, lga: f64) -> f64 {
    -x + a * x.ln() - lga
}

fn series(a: f64, x: f64, lga: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * TOLERANCE {
            break;
        }
    }
    sum * log_prefactor(a, x, lga).exp()
}

/// Upper function `Q(a, x)` by continued fraction.
fn continued_fraction(a: f64, x: f64, lga: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < TOLERANCE {
            break;
        }
    }
    log_prefactor(a, x, lga).exp() * h
}

fn check(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("incomplete gamma shape {a} must be positive")));
    }
    if x < 0.0 || x.is_nan() {
        return Err(Error::InvalidArgument(format!("incomplete gamma argument {x} is negative")));
    }
    Ok(())
}

/// `P(a, x)` and `Q(a, x) = 1 - P(a, x)`, each computed on the side where
/// it is accurate.
pub fn inc_gamma_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    check(a, x)?;
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x == f64::INFINITY {
        return Ok((1.0, 0.0));
    }
    let lga = lgamma(a);
    Ok(if x < a + 1.0 {
        let p = series(a, x, lga).min(1.0);
        (p, 1.0 - p)
    } else {
        let q = continued_fraction(a, x, lga).clamp(0.0, 1.0);
        (1.0 - q, q)
    })
}

pub fn inc_gamma(a: f64, x: f64) -> Result<f64> {
    inc_gamma_pair(a, x).map(|(p, _)| p)
}

/// Lane-wise `P(a, x_l)` and `Q(a, x_l)` for one shape `a`. Lanes are
/// processed in groups of at most 16 that share a stopping rule.
pub fn inc_gamma_block_pair(a: f64, x: &[f64], lower: &mut [f64], upper: &mut [f64]) -> Result<()> {
    for &xi in x {
        check(a, xi)?;
    }
    let lga = lgamma(a);
    for ((xs, lo), up) in x.chunks(LANES).zip(lower.chunks_mut(LANES)).zip(upper.chunks_mut(LANES)) {
        lanes(a, lga, xs, lo, up);
    }
    Ok(())
}

const LANES: usize = 16;

fn lanes(a: f64, lga: f64, x: &[f64], lower: &mut [f64], upper: &mut [f64]) {
    let v = x.len();
    let mut in_series = [false; LANES];
    let mut in_fraction = [false; LANES];
    for l in 0..v {
        if x[l] == 0.0 {
            (lower[l], upper[l]) = (0.0, 1.0);
        } else if x[l] == f64::INFINITY {
            (lower[l], upper[l]) = (1.0, 0.0);
        } else if x[l] < a + 1.0 {
            in_series[l] = true;
        } else {
            in_fraction[l] = true;
        }
    }

    if in_series[..v].iter().any(|&s| s) {
        let first = 1.0 / a;
        let mut term = [first; LANES];
        let mut sum = [first; LANES];
        let mut ap = a;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            let inv = 1.0 / ap;
            let mut worst = 0.0f64;
            for l in 0..v {
                if in_series[l] {
                    term[l] *= x[l] * inv;
                    sum[l] += term[l];
                    worst = worst.max(term[l].abs() / sum[l].abs());
                }
            }
            if worst < TOLERANCE {
                break;
            }
        }
        for l in 0..v {
            if in_series[l] {
                let p = (sum[l] * log_prefactor(a, x[l], lga).exp()).min(1.0);
                (lower[l], upper[l]) = (p, 1.0 - p);
            }
        }
    }

    if in_fraction[..v].iter().any(|&f| f) {
        let mut b = [0.0; LANES];
        let mut c = [1.0 / TINY; LANES];
        let mut d = [0.0; LANES];
        let mut h = [0.0; LANES];
        for l in 0..v {
            if in_fraction[l] {
                b[l] = x[l] + 1.0 - a;
                d[l] = 1.0 / b[l];
                h[l] = d[l];
            }
        }
        for i in 1..=MAX_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            let mut worst = 0.0f64;
            for l in 0..v {
                if in_fraction[l] {
                    b[l] += 2.0;
                    d[l] = an * d[l] + b[l];
                    if d[l].abs() < TINY {
                        d[l] = TINY;
                    }
                    c[l] = b[l] + an / c[l];
                    if c[l].abs() < TINY {
                        c[l] = TINY;
                    }
                    d[l] = 1.0 / d[l];
                    let step = d[l] * c[l];
                    h[l] *= step;
                    worst = worst.max((step - 1.0).abs());
                }
            }
            if worst < TOLERANCE {
                break;
            }
        }
        for l in 0..v {
            if in_fraction[l] {
                let q = (log_prefactor(a, x[l], lga).exp() * h[l]).clamp(0.0, 1.0);
                (lower[l], upper[l]) = (1.0 - q, q);
            }
        }
    }
}

pub fn inc_gamma_block(a: f64, x: &[f64]) -> Result<Vec<f64>> {
    let mut lower = vec![0.0; x.len()];
    let mut upper = vec![0.0; x.len()];
    inc_gamma_block_pair(a, x, &mut lower, &mut upper)?;
    Ok(lower)
}
