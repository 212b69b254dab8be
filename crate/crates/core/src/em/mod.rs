//! Maximum-likelihood estimation of the mixture by multi-start EM, plus
//! nonparametric bootstrap standard errors.

mod bootstrap;
mod estep;
mod fit;
mod init;
mod mstep;

pub(crate) use bootstrap::align_cfa_signs;
pub use bootstrap::{aggregate_replicates, bootstrap_se, BootstrapCell, BootstrapTable};
pub(crate) use mstep::m_step_cfa_weighted;
pub use estep::{e_step, EStepMoments};
pub use fit::{fit_em, refit_from, FitResult};
pub use init::initialize;
pub use mstep::{m_step_beta, m_step_cfa, m_step_efa, BetaUpdate};

use crate::model::FactorStructure;

/// What to fit: the CFA zero pattern, the EFA factor count, and whether the
/// CFA factor means are constrained to zero.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub structure: FactorStructure,
    pub n_efa_factors: usize,
    pub means_fixed_zero: bool,
}

impl ModelSpec {
    pub fn new(structure: FactorStructure, n_efa_factors: usize, means_fixed_zero: bool) -> Self {
        Self {
            structure,
            n_efa_factors,
            means_fixed_zero,
        }
    }
}

/// EM control knobs.
#[derive(Debug, Clone)]
pub struct EmOptions {
    /// Iteration cap per start.
    pub max_iter: usize,
    /// Stop when the observed-data log-likelihood changes by less than this.
    pub tol: f64,
    /// Number of independent EM starts.
    pub n_starts: usize,
    /// Added to every uniqueness update.
    pub ridge: f64,
    /// Lower bound for uniquenesses (guards Heywood cases).
    pub uniqueness_floor: f64,
    /// Seed of the run's random streams.
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            n_starts: 10,
            ridge: 1e-6,
            uniqueness_floor: 1e-4,
            seed: 0,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tol > 0.0) {
            return Err(crate::Error::InvalidParameter("tol must be positive".into()));
        }
        if !(self.uniqueness_floor > 0.0) {
            return Err(crate::Error::InvalidParameter(
                "uniqueness_floor must be positive".into(),
            ));
        }
        if self.ridge < 0.0 {
            return Err(crate::Error::InvalidParameter("ridge must be nonnegative".into()));
        }
        if self.max_iter == 0 || self.n_starts == 0 {
            return Err(crate::Error::InvalidParameter(
                "max_iter and n_starts must be positive".into(),
            ));
        }
        Ok(())
    }
}
