//! The multi-start EM driver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{classify, count_params, Dataset, MixtureParams};
use crate::rng::{stream_rng, tag};
use crate::selection::entropy_raw;

use super::estep::e_step;
use super::init::{initialize, initialize_with_rng, jitter_loadings, JITTER_SD};
use super::mstep::{m_step_beta, m_step_cfa, m_step_efa};
use super::{EmOptions, ModelSpec};

/// A converged (or iteration-capped) fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    /// `n x 2` posterior probabilities at the final parameters.
    pub responsibilities: DMatrix<f64>,
    /// Hard assignments (`1` = CFA component).
    pub assignments: Vec<u8>,
    /// Observed-data log-likelihood after each iteration, starting at the
    /// initial parameters; non-decreasing up to small numerical slack.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    /// Free-parameter count of the fitted model.
    pub n_params: usize,
    /// Raw responsibility entropy at the final parameters.
    pub entropy_raw: f64,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("non-empty trace")
    }
}

struct Chain {
    params: MixtureParams,
    responsibilities: DMatrix<f64>,
    trace: Vec<f64>,
    converged: bool,
    n_iter: usize,
}

fn run_chain(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &EmOptions,
    start: MixtureParams,
) -> Result<Chain> {
    let mut params = start;
    let mut moments = e_step(data, &params)?;
    let mut trace = vec![moments.loglik];
    let mut converged = false;
    let mut n_iter = 0;
    for _ in 0..opts.max_iter {
        let cfa = m_step_cfa(
            data,
            &moments,
            &spec.structure,
            spec.means_fixed_zero,
            opts.ridge,
            opts.uniqueness_floor,
        )?;
        let efa = m_step_efa(data, &moments, opts.ridge, opts.uniqueness_floor)?;
        let beta = m_step_beta(&data.design, &moments.responsibilities, &params.reg)?;
        params = MixtureParams {
            cfa,
            efa,
            reg: beta.reg,
        };
        moments = e_step(data, &params)?;
        n_iter += 1;
        let prev = trace[trace.len() - 1];
        trace.push(moments.loglik);
        if (moments.loglik - prev).abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(Chain {
        params,
        responsibilities: moments.responsibilities,
        trace,
        converged,
        n_iter,
    })
}

fn check_spec(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if spec.structure.p() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "structure has p = {} items but data has p = {}",
            spec.structure.p(),
            data.p()
        )));
    }
    if spec.n_efa_factors == 0 || spec.n_efa_factors >= data.p() {
        return Err(Error::InvalidParameter(format!(
            "EFA factor count must satisfy 0 < K < p, got K = {}",
            spec.n_efa_factors
        )));
    }
    Ok(())
}

fn assemble(data: &Dataset, spec: &ModelSpec, chain: Chain) -> FitResult {
    let assignments = classify(&chain.responsibilities);
    let entropy = entropy_raw(&chain.responsibilities);
    let n_params = count_params(
        &spec.structure,
        spec.n_efa_factors,
        data.n_covariates(),
        spec.means_fixed_zero,
    );
    FitResult {
        params: chain.params,
        responsibilities: chain.responsibilities,
        assignments,
        loglik_trace: chain.trace,
        converged: chain.converged,
        n_iter: chain.n_iter,
        n_params,
        entropy_raw: entropy,
    }
}

/// Fit by EM from `opts.n_starts` independent starts and keep the chain with
/// the highest final log-likelihood (ties to the lowest start index).
///
/// Start 0 uses the deterministic base initialization; every later start
/// reruns the initialization on its own stream (fresh k-means centroids) and
/// adds loading jitter. Starts run in parallel; the outcome does not depend
/// on scheduling.
pub fn fit_em(data: &Dataset, spec: &ModelSpec, opts: &EmOptions) -> Result<FitResult> {
    opts.validate()?;
    check_spec(data, spec)?;

    let chains = exec::map_indexed(opts.n_starts, |s| {
        let start = if s == 0 {
            initialize(data, spec, opts.seed)?
        } else {
            let mut rng = stream_rng(opts.seed, &[tag::EM_START, s as u64]);
            let mut params = initialize_with_rng(data, spec, &mut rng)?;
            jitter_loadings(&mut params, &spec.structure, &mut rng, JITTER_SD);
            params
        };
        run_chain(data, spec, opts, start)
    });

    let mut best: Option<Chain> = None;
    let mut causes = Vec::new();
    for chain in chains {
        match chain {
            Ok(c) => {
                let better = match &best {
                    None => true,
                    Some(b) => c.trace[c.trace.len() - 1] > b.trace[b.trace.len() - 1],
                };
                if better {
                    best = Some(c);
                }
            }
            Err(e) => causes.push(e.to_string()),
        }
    }
    match best {
        Some(chain) => Ok(assemble(data, spec, chain)),
        None => Err(Error::AllStartsFailed {
            n_starts: opts.n_starts,
            causes,
        }),
    }
}

/// Run a single EM chain from the given parameters (no re-initialization);
/// used for bootstrap replicates seeded at the point estimate.
pub fn refit_from(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &EmOptions,
    start: &MixtureParams,
) -> Result<FitResult> {
    opts.validate()?;
    check_spec(data, spec)?;
    let chain = run_chain(data, spec, opts, start.clone())?;
    Ok(assemble(data, spec, chain))
}
