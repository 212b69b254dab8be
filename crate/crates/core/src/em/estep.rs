//! E-step: responsibilities and Gaussian conditional factor moments.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::exec;
use crate::linalg::{pairwise_sum, symmetrize};
use crate::model::{ComponentContext, Dataset, MixtureParams};

/// Conditional expectations of the latent data given the observations.
///
/// The conditional covariances do not depend on the observation, so only the
/// per-observation conditional means are stored; second moments are
/// recovered as `cov + m mᵀ` on demand.
#[derive(Debug, Clone)]
pub struct EStepMoments {
    /// `n x 2` responsibilities; column 0 is the CFA component.
    pub responsibilities: DMatrix<f64>,
    /// `n x q` conditional means `E[eta_i | y_i, z=1]`.
    pub cfa_means: DMatrix<f64>,
    /// `n x K` conditional means `E[xi_i | y_i, z=0]`.
    pub efa_means: DMatrix<f64>,
    /// `q x q` conditional covariance `Cov[eta | y, z=1]` (common to all i).
    pub cfa_cond_cov: DMatrix<f64>,
    /// `K x K` conditional covariance `Cov[xi | y, z=0]`.
    pub efa_cond_cov: DMatrix<f64>,
    /// Observed-data log-likelihood at the parameters used for this E-step.
    pub loglik: f64,
}

impl EStepMoments {
    /// `E[eta_i eta_iᵀ | y_i, z=1]`.
    pub fn cfa_second_moment(&self, i: usize) -> DMatrix<f64> {
        let m = self.cfa_means.row(i).transpose();
        &self.cfa_cond_cov + &m * m.transpose()
    }

    /// `E[xi_i xi_iᵀ | y_i, z=0]`.
    pub fn efa_second_moment(&self, i: usize) -> DMatrix<f64> {
        let m = self.efa_means.row(i).transpose();
        &self.efa_cond_cov + &m * m.transpose()
    }
}

/// Compute responsibilities and conditional factor moments.
///
/// With `Sigma_1 = L1 Phi L1ᵀ + Theta`, standard Gaussian conditioning gives
/// `E[eta|y,z=1] = mu + Phi L1ᵀ Sigma_1⁻¹ (y - L1 mu)` and
/// `Cov[eta|y,z=1] = Phi - Phi L1ᵀ Sigma_1⁻¹ L1 Phi`; the EFA block is the
/// same with the factor covariance replaced by the identity and `mu` by `nu`.
pub fn e_step(data: &Dataset, params: &MixtureParams) -> Result<EStepMoments> {
    let ctx = ComponentContext::new(data, params)?;
    let n = data.n();
    let q = params.cfa.q();
    let k = params.efa.k();

    // Gain matrices: G1 = Phi L1ᵀ Sigma_1⁻¹ (q x p), G2 = L2ᵀ Sigma_2⁻¹.
    let lam_phi = &params.cfa.loadings * &params.cfa.factor_corr; // p x q
    let g1 = ctx.chol_cfa.solve_mat(&lam_phi).transpose();
    let g2 = ctx.chol_efa.solve_mat(&params.efa.loadings).transpose();

    let mut cfa_cond_cov = &params.cfa.factor_corr - &g1 * &lam_phi;
    symmetrize(&mut cfa_cond_cov);
    let mut efa_cond_cov = DMatrix::identity(k, k) - &g2 * &params.efa.loadings;
    symmetrize(&mut efa_cond_cov);

    let mean_cfa = ctx.mean_cfa.clone();
    let mean_efa = ctx.mean_efa.clone();
    let rows = exec::map_indexed(n, |i| {
        let y = data.row(i);
        let (r1, r0, lse) = ctx.responsibilities(i, &y);
        let m1 = &params.cfa.factor_means + &g1 * (&y - &mean_cfa);
        let m0 = &params.efa.factor_means + &g2 * (&y - &mean_efa);
        (r1, r0, m1, m0, lse)
    });

    let mut responsibilities = DMatrix::zeros(n, 2);
    let mut cfa_means = DMatrix::zeros(n, q);
    let mut efa_means = DMatrix::zeros(n, k);
    let mut terms = Vec::with_capacity(n);
    for (i, (r1, r0, m1, m0, lse)) in rows.into_iter().enumerate() {
        responsibilities[(i, 0)] = r1;
        responsibilities[(i, 1)] = r0;
        cfa_means.set_row(i, &m1.transpose());
        efa_means.set_row(i, &m0.transpose());
        terms.push(lse);
    }

    Ok(EStepMoments {
        responsibilities,
        cfa_means,
        efa_means,
        cfa_cond_cov,
        efa_cond_cov,
        loglik: pairwise_sum(&terms),
    })
}
