//! Nonparametric bootstrap standard errors.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{CfaParams, Dataset, EfaParams, FactorStructure, MixtureParams};
use crate::rng::{stream_rng, tag};

use super::fit::refit_from;
use super::{EmOptions, ModelSpec};

/// One parameter cell of the bootstrap table.
#[derive(Debug, Clone)]
pub struct BootstrapCell {
    /// Parameter block: `lambda1`, `theta_delta`, `phi`, `mu`, `lambda2`,
    /// `psi_epsilon`, `nu`, or `beta`.
    pub block: &'static str,
    /// 1-based row coordinate (item, factor, or coefficient index).
    pub row: usize,
    /// 1-based column coordinate; 0 for vector blocks.
    pub col: usize,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct BootstrapTable {
    pub cells: Vec<BootstrapCell>,
    /// Replicates that converged and entered the aggregation.
    pub n_effective: usize,
    pub n_dropped: usize,
}

/// Flip CFA factor columns of `candidate` whose loading vectors point away
/// from the reference (negative inner product), with the matching sign
/// changes in the factor correlations and means.
pub(crate) fn align_cfa_signs(reference: &CfaParams, candidate: &mut CfaParams) {
    let q = reference.q();
    for k in 0..q {
        let dot = reference.loadings.column(k).dot(&candidate.loadings.column(k));
        if dot < 0.0 {
            for j in 0..candidate.p() {
                candidate.loadings[(j, k)] = -candidate.loadings[(j, k)];
            }
            for r in 0..q {
                if r != k {
                    candidate.factor_corr[(r, k)] = -candidate.factor_corr[(r, k)];
                    candidate.factor_corr[(k, r)] = -candidate.factor_corr[(k, r)];
                }
            }
            candidate.factor_means[k] = -candidate.factor_means[k];
        }
    }
}

/// Match EFA columns of `candidate` to the reference greedily by absolute
/// inner product, permute them into reference order, then sign-align each
/// matched column (means follow the columns).
pub(crate) fn align_efa_columns(reference: &EfaParams, candidate: &mut EfaParams) {
    let k = reference.k();
    let mut paired_ref = vec![false; k];
    let mut paired_cand = vec![false; k];
    let mut pairing = vec![0usize; k]; // reference column -> candidate column
    for _ in 0..k {
        let mut best = (0usize, 0usize, -1.0f64);
        for r in 0..k {
            if paired_ref[r] {
                continue;
            }
            for c in 0..k {
                if paired_cand[c] {
                    continue;
                }
                let dot = reference.loadings.column(r).dot(&candidate.loadings.column(c)).abs();
                if dot > best.2 {
                    best = (r, c, dot);
                }
            }
        }
        pairing[best.0] = best.1;
        paired_ref[best.0] = true;
        paired_cand[best.1] = true;
    }
    let p = candidate.p();
    let mut loadings = DMatrix::zeros(p, k);
    let mut means = nalgebra::DVector::zeros(k);
    for r in 0..k {
        let c = pairing[r];
        let dot = reference.loadings.column(r).dot(&candidate.loadings.column(c));
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            loadings[(j, r)] = sign * candidate.loadings[(j, c)];
        }
        means[r] = sign * candidate.factor_means[c];
    }
    candidate.loadings = loadings;
    candidate.factor_means = means;
}

fn align_replicate(point: &MixtureParams, mut rep: MixtureParams) -> MixtureParams {
    align_cfa_signs(&point.cfa, &mut rep.cfa);
    align_efa_columns(&point.efa, &mut rep.efa);
    rep
}

/// Enumerate the free parameters of `params` as `(block, row, col, value)`.
fn cells_of(params: &MixtureParams, structure: &FactorStructure) -> Vec<(&'static str, usize, usize, f64)> {
    let mut out = Vec::new();
    let (p, q, k) = (params.cfa.p(), params.cfa.q(), params.efa.k());
    for j in 0..p {
        for c in 0..q {
            if structure.is_free(j, c) {
                out.push(("lambda1", j + 1, c + 1, params.cfa.loadings[(j, c)]));
            }
        }
    }
    for j in 0..p {
        out.push(("theta_delta", j + 1, 0, params.cfa.uniquenesses[j]));
    }
    for r in 1..q {
        for c in 0..r {
            out.push(("phi", r + 1, c + 1, params.cfa.factor_corr[(r, c)]));
        }
    }
    if !params.cfa.means_fixed_zero {
        for c in 0..q {
            out.push(("mu", c + 1, 0, params.cfa.factor_means[c]));
        }
    }
    for j in 0..p {
        for c in 0..k {
            out.push(("lambda2", j + 1, c + 1, params.efa.loadings[(j, c)]));
        }
    }
    for j in 0..p {
        out.push(("psi_epsilon", j + 1, 0, params.efa.uniquenesses[j]));
    }
    for c in 0..k {
        out.push(("nu", c + 1, 0, params.efa.factor_means[c]));
    }
    for c in 0..params.reg.beta.len() {
        out.push(("beta", c + 1, 0, params.reg.beta[c]));
    }
    out
}

/// Standard deviations across sign/permutation-aligned replicates.
///
/// Exposed separately so degenerate cases (e.g. identical replicates giving
/// all-zero standard errors) can be exercised directly.
pub fn aggregate_replicates(
    point: &MixtureParams,
    structure: &FactorStructure,
    replicates: Vec<MixtureParams>,
    n_dropped: usize,
) -> BootstrapTable {
    let n_effective = replicates.len();
    let aligned: Vec<Vec<(&'static str, usize, usize, f64)>> = replicates
        .into_iter()
        .map(|rep| cells_of(&align_replicate(point, rep), structure))
        .collect();
    let point_cells = cells_of(point, structure);
    let cells = point_cells
        .iter()
        .enumerate()
        .map(|(idx, &(block, row, col, estimate))| {
            let values: Vec<f64> = aligned.iter().map(|rep| rep[idx].3).collect();
            let m = values.iter().sum::<f64>() / n_effective as f64;
            let var = if n_effective > 1 {
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n_effective - 1) as f64
            } else {
                0.0
            };
            BootstrapCell {
                block,
                row,
                col,
                estimate,
                se: var.sqrt(),
            }
        })
        .collect();
    BootstrapTable {
        cells,
        n_effective,
        n_dropped,
    }
}

/// Bootstrap standard errors from `b` row resamples, each refit by a single
/// EM chain started at the point estimate. Replicates that fail or do not
/// converge are dropped; more than 20% dropped is an error.
pub fn bootstrap_se(
    data: &Dataset,
    spec: &ModelSpec,
    point: &MixtureParams,
    opts: &EmOptions,
    b: usize,
) -> Result<BootstrapTable> {
    if b < 2 {
        return Err(Error::InvalidParameter(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    let n = data.n();
    let replicate_opts = EmOptions {
        n_starts: 1,
        ..opts.clone()
    };
    let fits = exec::map_indexed(b, |r| {
        let mut rng = stream_rng(opts.seed, &[tag::BOOTSTRAP, r as u64]);
        let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let resampled = data.select_rows(&indices);
        match refit_from(&resampled, spec, &replicate_opts, point) {
            Ok(fit) if fit.converged => Some(fit.params),
            _ => None,
        }
    });
    let replicates: Vec<MixtureParams> = fits.into_iter().flatten().collect();
    let dropped = b - replicates.len();
    if dropped * 5 > b {
        return Err(Error::TooManyDroppedReplicates { dropped, total: b });
    }
    Ok(aggregate_replicates(point, &spec.structure, replicates, dropped))
}
