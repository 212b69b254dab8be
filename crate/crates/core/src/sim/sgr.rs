//! The SGR conditional replacement model for faking-good perturbation, and
//! the discretization of continuous responses into rating categories.

use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Interior cut points at the standard-normal quantiles of `j / m`,
/// `j = 1..m-1`: near-uniform category usage for standardized responses.
pub fn default_thresholds(m: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (1..m)
        .map(|j| normal.inverse_cdf(j as f64 / m as f64))
        .collect()
}

/// Map continuous values into categories `1..=M` with `M = thresholds.len()
/// + 1`: category `m` iff `t_{m-1} < y <= t_m` with `t_0 = -inf`,
/// `t_M = +inf` (boundary ties go down).
pub fn discretize(values: &DMatrix<f64>, thresholds: &[f64]) -> Result<DMatrix<f64>> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "thresholds must be strictly increasing".into(),
        ));
    }
    Ok(values.map(|v| {
        let mut cat = 1usize;
        for &t in thresholds {
            if v > t {
                cat += 1;
            } else {
                break;
            }
        }
        cat as f64
    }))
}

/// Probabilities of the discretized Beta over the integer grid `a..=b`:
/// Beta(`gamma`, `delta`) CDF differences over `b - a + 1` equal-width
/// subintervals of `(0, 1)`, with subinterval `j` mapped to category
/// `a + j - 1`.
fn discretized_beta(a: usize, b: usize, gamma: f64, delta: f64) -> Vec<f64> {
    let n_cat = b - a + 1;
    let mut out = Vec::with_capacity(n_cat);
    let mut lower = 0.0;
    for j in 1..=n_cat {
        let upper = if j == n_cat {
            1.0
        } else {
            beta_reg(gamma, delta, j as f64 / n_cat as f64)
        };
        out.push(upper - lower);
        lower = upper;
    }
    out
}

/// The `M x M` conditional replacement matrix: entry `(m, m')` is
/// `P(fake = m' | honest = m)`. Faked responses never decrease; with
/// probability `1 - kappa` a response below the ceiling stays put, and the
/// mass moved upward follows the discretized Beta over `{m+1, ..., M}`.
pub fn sgr_replacement_matrix(m: usize, gamma: f64, delta: f64, kappa: f64) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "replacement matrix needs M >= 2, got {m}"
        )));
    }
    if !(gamma > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(
            "beta shape parameters must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!(
            "kappa must lie in [0, 1], got {kappa}"
        )));
    }
    let mut out = DMatrix::zeros(m, m);
    out[(m - 1, m - 1)] = 1.0;
    for row in 0..m - 1 {
        out[(row, row)] = 1.0 - kappa;
        let dg = discretized_beta(row + 2, m, gamma, delta);
        for (offset, prob) in dg.into_iter().enumerate() {
            out[(row, row + 1 + offset)] = kappa * prob;
        }
    }
    Ok(out)
}

/// Resample the entries of the selected rows from the replacement
/// distribution conditioned on their current value; other rows pass through
/// untouched. Responses must already live on the `1..=M` grid.
pub fn perturb_faking<R: Rng + ?Sized>(
    responses: &DMatrix<f64>,
    rows: &[usize],
    m: usize,
    gamma: f64,
    delta: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let replacement = sgr_replacement_matrix(m, gamma, delta, kappa)?;
    let mut out = responses.clone();
    for &i in rows {
        for j in 0..responses.ncols() {
            let current = responses[(i, j)];
            let cat = current as usize;
            if current.fract() != 0.0 || !(1..=m).contains(&cat) {
                return Err(Error::InvalidParameter(format!(
                    "response ({}, {}) = {} is not a category in 1..={}",
                    i + 1,
                    j + 1,
                    current,
                    m
                )));
            }
            let u: f64 = rng.random();
            let mut cum = 0.0;
            let mut drawn = m; // falls through to the top category
            for target in 0..m {
                cum += replacement[(cat - 1, target)];
                if u <= cum {
                    drawn = target + 1;
                    break;
                }
            }
            out[(i, j)] = drawn as f64;
        }
    }
    Ok(out)
}
