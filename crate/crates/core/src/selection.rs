//! Information and classification criteria, responsibility entropy, and the
//! entropy-conditioned scan over candidate models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::em::{fit_em, EmOptions, FitResult, ModelSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::pairwise_sum;
use crate::model::{Dataset, FactorStructure};
use crate::sim::{score_classification, ClassMetrics};

/// The criteria battery for one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub loglik: f64,
    pub n_params: usize,
    pub n: usize,
    /// Raw responsibility entropy `EN`.
    pub entropy: f64,
    pub aic: f64,
    pub caic: f64,
    pub bic: f64,
    pub ss_bic: f64,
    pub clc: f64,
    pub icl_bic: f64,
    /// Normalized entropy `H = 1 - EN / (n log 2)`, clamped to `[0, 1]`.
    pub h: f64,
}

/// Raw entropy of the responsibilities:
/// `EN = -sum_i sum_w r_iw log r_iw`, with `0 log 0 = 0`.
pub fn entropy_raw(responsibilities: &DMatrix<f64>) -> f64 {
    let n = responsibilities.nrows();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for w in 0..responsibilities.ncols() {
                let r = responsibilities[(i, w)];
                if r > 0.0 {
                    s -= r * r.ln();
                }
            }
            s
        })
        .collect();
    pairwise_sum(&terms)
}

/// Assemble the criteria battery from the log-likelihood `l`, the
/// free-parameter count, the sample size, and the raw entropy:
///
/// `AIC = -2l + 2v`, `CAIC = -2l + v (log n + 1)`, `BIC = -2l + v log n`,
/// `ssBIC = -2l + v log((n+2)/24)`, `CLC = -2l + 2 EN`,
/// `ICL-BIC = BIC + 2 EN`, `H = 1 - EN / (n log 2)`.
pub fn criteria(loglik: f64, n_params: usize, n: usize, entropy: f64) -> CriteriaReport {
    if n <= n_params {
        log::warn!("criteria computed with n = {n} <= {n_params} free parameters");
    }
    let v = n_params as f64;
    let nn = n as f64;
    let minus2l = -2.0 * loglik;
    let bic = minus2l + v * nn.ln();
    let h = if n == 0 {
        1.0
    } else {
        (1.0 - entropy / (nn * std::f64::consts::LN_2)).clamp(0.0, 1.0)
    };
    CriteriaReport {
        loglik,
        n_params,
        n,
        entropy,
        aic: minus2l + 2.0 * v,
        caic: minus2l + v * (nn.ln() + 1.0),
        bic,
        ss_bic: minus2l + v * ((nn + 2.0) / 24.0).ln(),
        clc: minus2l + 2.0 * entropy,
        icl_bic: bic + 2.0 * entropy,
        h,
    }
}

impl CriteriaReport {
    /// From a finished fit.
    pub fn from_fit(fit: &FitResult, n: usize) -> Self {
        criteria(fit.loglik(), fit.n_params, n, fit.entropy_raw)
    }
}

/// One candidate of a scan.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub n_efa_factors: usize,
    /// Covariate subset behind this candidate (empty = intercept only).
    pub covariates: Vec<String>,
    /// Display label, e.g. `K=2+age`.
    pub label: String,
    /// Criteria of the fitted candidate; `None` when the fit failed.
    pub report: Option<CriteriaReport>,
    /// Classification metrics against the bundled truth, when available.
    pub metrics: Option<ClassMetrics>,
    /// Failure reason for flagged rows.
    pub error: Option<String>,
}

/// Scan outcome: all rows in grid order plus the selection.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub rows: Vec<ScanRow>,
    /// Index into `rows` of the selected candidate, if any row succeeded.
    pub selected: Option<usize>,
    /// Argmin winner per index (argmax for `H`), by retained-row index.
    pub winners: IndexWinners,
    pub entropy_band: f64,
}

/// Per-criterion winners (indices into `ScanOutcome::rows`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IndexWinners {
    pub aic: Option<usize>,
    pub caic: Option<usize>,
    pub bic: Option<usize>,
    pub ss_bic: Option<usize>,
    pub clc: Option<usize>,
    pub icl_bic: Option<usize>,
    pub h: Option<usize>,
}

/// Scan configuration: the candidate grid and the entropy band of the
/// selection rule.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub k_values: Vec<usize>,
    /// Covariate subsets; use one empty subset for intercept-only scans.
    pub covariate_subsets: Vec<Vec<String>>,
    pub means_fixed_zero: bool,
    /// Candidates with `H` within this band of the maximum stay eligible for
    /// selection (default 0.005).
    pub entropy_band: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1],
            covariate_subsets: vec![Vec::new()],
            means_fixed_zero: false,
            entropy_band: 0.005,
        }
    }
}

fn candidate_label(k: usize, covariates: &[String]) -> String {
    if covariates.is_empty() {
        format!("K={k}")
    } else {
        format!("K={k}+{}", covariates.join("+"))
    }
}

/// Fit every `(K, covariate subset)` candidate and select among those with
/// `H` within `entropy_band` of the maximum the one minimizing ICL-BIC
/// (earlier rows win ties). Failed candidates are flagged and skipped.
pub fn scan(
    data: &Dataset,
    structure: &FactorStructure,
    config: &ScanConfig,
    opts: &EmOptions,
) -> Result<ScanOutcome> {
    if config.k_values.is_empty() || config.covariate_subsets.is_empty() {
        return Err(Error::InvalidParameter("empty scan grid".into()));
    }
    let grid: Vec<(usize, Vec<String>)> = config
        .k_values
        .iter()
        .flat_map(|&k| {
            config
                .covariate_subsets
                .iter()
                .map(move |subset| (k, subset.clone()))
        })
        .collect();

    let fits = exec::map_indexed(grid.len(), |idx| {
        let (k, subset) = &grid[idx];
        let candidate_opts = EmOptions {
            seed: opts.seed ^ crate::rng::tag::SCAN.wrapping_mul(idx as u64 + 1),
            ..opts.clone()
        };
        let run = || -> Result<(CriteriaReport, Option<ClassMetrics>)> {
            let sub_data = data.with_covariate_subset(subset)?;
            let spec = ModelSpec::new(structure.clone(), *k, config.means_fixed_zero);
            let fit = fit_em(&sub_data, &spec, &candidate_opts)?;
            let report = CriteriaReport::from_fit(&fit, sub_data.n());
            let metrics = sub_data
                .truth
                .as_ref()
                .map(|z| score_classification(z, &fit.assignments).1);
            Ok((report, metrics))
        };
        run()
    });

    let rows: Vec<ScanRow> = grid
        .into_iter()
        .zip(fits)
        .map(|((k, covariates), outcome)| {
            let label = candidate_label(k, &covariates);
            match outcome {
                Ok((report, metrics)) => ScanRow {
                    n_efa_factors: k,
                    covariates,
                    label,
                    report: Some(report),
                    metrics,
                    error: None,
                },
                Err(e) => ScanRow {
                    n_efa_factors: k,
                    covariates,
                    label,
                    report: None,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<(usize, &CriteriaReport)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.report.as_ref().map(|rep| (i, rep)))
        .collect();

    let selected = if ok.is_empty() {
        None
    } else {
        let h_max = ok.iter().map(|(_, r)| r.h).fold(f64::NEG_INFINITY, f64::max);
        ok.iter()
            .filter(|(_, r)| r.h >= h_max - config.entropy_band)
            .min_by(|(_, a), (_, b)| a.icl_bic.partial_cmp(&b.icl_bic).unwrap())
            .map(|(i, _)| *i)
    };

    let argmin = |f: fn(&CriteriaReport) -> f64| -> Option<usize> {
        ok.iter()
            .min_by(|(_, a), (_, b)| f(a).partial_cmp(&f(b)).unwrap())
            .map(|(i, _)| *i)
    };
    let winners = IndexWinners {
        aic: argmin(|r| r.aic),
        caic: argmin(|r| r.caic),
        bic: argmin(|r| r.bic),
        ss_bic: argmin(|r| r.ss_bic),
        clc: argmin(|r| r.clc),
        icl_bic: argmin(|r| r.icl_bic),
        h: ok
            .iter()
            .max_by(|(_, a), (_, b)| a.h.partial_cmp(&b.h).unwrap())
            .map(|(i, _)| *i),
    };

    Ok(ScanOutcome {
        rows,
        selected,
        winners,
        entropy_band: config.entropy_band,
    })
}
