//! Parameter blocks of the CFA+EFA mixture and the free-parameter count.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::model::FactorStructure;

/// Parameters of the structured (CFA) component.
///
/// The implied covariance of an observation from this component is
/// `loadings * factor_corr * loadingsᵀ + diag(uniquenesses)` and its mean is
/// `loadings * factor_means`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfaParams {
    /// `p x q` loading matrix, zero wherever the structure pattern is zero.
    pub loadings: DMatrix<f64>,
    /// `q x q` factor correlation matrix: symmetric, positive-definite,
    /// unit diagonal.
    pub factor_corr: DMatrix<f64>,
    /// Diagonal of the measurement-error covariance, all entries positive.
    pub uniquenesses: DVector<f64>,
    /// Factor means; all zero when `means_fixed_zero` is set.
    pub factor_means: DVector<f64>,
    /// When set, the factor means are constrained to zero (an identifiability
    /// option) and are not counted as free parameters.
    pub means_fixed_zero: bool,
}

/// Parameters of the unstructured (EFA) component.
///
/// The factor covariance is the identity by construction and is not stored;
/// the implied covariance is `loadings * loadingsᵀ + diag(uniquenesses)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EfaParams {
    /// `p x K` loading matrix, all entries free.
    pub loadings: DMatrix<f64>,
    /// Diagonal of the error covariance, all entries positive.
    pub uniquenesses: DVector<f64>,
    /// Factor means (length `K`).
    pub factor_means: DVector<f64>,
}

/// Coefficients of the logistic mixture-weight model.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureReg {
    /// Length `C + 1`; index 0 is the intercept.
    pub beta: DVector<f64>,
    /// Labels of the `C` covariates (excluding the intercept).
    pub covariate_names: Vec<String>,
}

/// The full parameter set of the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub cfa: CfaParams,
    pub efa: EfaParams,
    pub reg: MixtureReg,
}

impl CfaParams {
    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn q(&self) -> usize {
        self.loadings.ncols()
    }

    /// Check all type invariants against `structure`.
    pub fn validate(&self, structure: &FactorStructure) -> Result<()> {
        let (p, q) = (self.p(), self.q());
        if p != structure.p() || q != structure.q() {
            return Err(Error::DimensionMismatch(format!(
                "loadings are {p}x{q} but the structure is {}x{}",
                structure.p(),
                structure.q()
            )));
        }
        for j in 0..p {
            for k in 0..q {
                if !structure.is_free(j, k) && self.loadings[(j, k)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "loading ({}, {}) must be fixed to zero",
                        j + 1,
                        k + 1
                    )));
                }
                if !self.loadings[(j, k)].is_finite() {
                    return Err(Error::InvalidParameter("non-finite loading".into()));
                }
            }
        }
        if self.factor_corr.nrows() != q || self.factor_corr.ncols() != q {
            return Err(Error::DimensionMismatch("factor correlation size".into()));
        }
        for k in 0..q {
            if self.factor_corr[(k, k)] != 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "factor correlation diagonal entry {} is not exactly 1",
                    k + 1
                )));
            }
        }
        SpdChol::factor(&self.factor_corr)
            .map_err(|_| Error::InvalidParameter("factor correlation is not positive-definite".into()))?;
        if self.uniquenesses.len() != p {
            return Err(Error::DimensionMismatch("uniqueness length".into()));
        }
        if self.uniquenesses.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("uniquenesses must be positive".into()));
        }
        if self.factor_means.len() != q {
            return Err(Error::DimensionMismatch("factor mean length".into()));
        }
        if self.means_fixed_zero && self.factor_means.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter(
                "factor means must all be zero when fixed".into(),
            ));
        }
        Ok(())
    }

    /// Model-implied mean `loadings * factor_means`.
    pub fn implied_mean(&self) -> DVector<f64> {
        &self.loadings * &self.factor_means
    }

    /// Model-implied covariance, without the SPD verification of
    /// [`assemble_cfa_cov`].
    pub(crate) fn implied_cov(&self) -> DMatrix<f64> {
        let lf = &self.loadings * &self.factor_corr;
        let mut cov = lf * self.loadings.transpose();
        symmetrize(&mut cov);
        for j in 0..self.p() {
            cov[(j, j)] += self.uniquenesses[j];
        }
        cov
    }
}

impl EfaParams {
    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, k) = (self.p(), self.k());
        if k >= p {
            return Err(Error::InvalidParameter(format!(
                "EFA factor count K = {k} must be smaller than item count p = {p}"
            )));
        }
        if self.loadings.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite EFA loading".into()));
        }
        if self.uniquenesses.len() != p {
            return Err(Error::DimensionMismatch("EFA uniqueness length".into()));
        }
        if self.uniquenesses.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("EFA uniquenesses must be positive".into()));
        }
        if self.factor_means.len() != k {
            return Err(Error::DimensionMismatch("EFA factor mean length".into()));
        }
        Ok(())
    }

    pub fn implied_mean(&self) -> DVector<f64> {
        &self.loadings * &self.factor_means
    }

    pub(crate) fn implied_cov(&self) -> DMatrix<f64> {
        let mut cov = &self.loadings * self.loadings.transpose();
        symmetrize(&mut cov);
        for j in 0..self.p() {
            cov[(j, j)] += self.uniquenesses[j];
        }
        cov
    }
}

impl MixtureReg {
    /// Intercept-only model with coefficient `beta0`.
    pub fn intercept_only(beta0: f64) -> Self {
        Self {
            beta: DVector::from_element(1, beta0),
            covariate_names: Vec::new(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() {
            return Err(Error::InvalidParameter("beta must include an intercept".into()));
        }
        if self.beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mixture coefficient".into()));
        }
        if self.covariate_names.len() != self.n_covariates() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} covariates",
                self.covariate_names.len(),
                self.n_covariates()
            )));
        }
        Ok(())
    }
}

impl MixtureParams {
    pub fn p(&self) -> usize {
        self.cfa.p()
    }

    pub fn validate(&self, structure: &FactorStructure) -> Result<()> {
        self.cfa.validate(structure)?;
        self.efa.validate()?;
        self.reg.validate()?;
        if self.cfa.p() != self.efa.p() {
            return Err(Error::DimensionMismatch(format!(
                "CFA has p = {} items but EFA has p = {}",
                self.cfa.p(),
                self.efa.p()
            )));
        }
        Ok(())
    }
}

/// `Sigma_1 = loadings * factor_corr * loadingsᵀ + diag(uniquenesses)`,
/// verified symmetric positive-definite.
pub fn assemble_cfa_cov(cfa: &CfaParams) -> Result<DMatrix<f64>> {
    let cov = cfa.implied_cov();
    SpdChol::factor(&cov)?;
    Ok(cov)
}

/// `Sigma_2 = loadings * loadingsᵀ + diag(uniquenesses)`, verified symmetric
/// positive-definite.
pub fn assemble_efa_cov(efa: &EfaParams) -> Result<DMatrix<f64>> {
    let cov = efa.implied_cov();
    SpdChol::factor(&cov)?;
    Ok(cov)
}

/// Number of free parameters of a CFA+EFA mixture:
/// free CFA loadings + `p` CFA uniquenesses + `p*K` EFA loadings + `p` EFA
/// uniquenesses + `K` EFA means + `C + 1` mixture coefficients +
/// `q(q-1)/2` factor correlations + `q` CFA means unless fixed to zero.
///
/// With one free loading per item and free means this reduces to
/// `3p + pK + q + K + C + 1 + q(q-1)/2`.
pub fn count_params(
    structure: &FactorStructure,
    n_efa_factors: usize,
    n_covariates: usize,
    means_fixed_zero: bool,
) -> usize {
    let p = structure.p();
    let q = structure.q();
    structure.n_free()
        + p
        + p * n_efa_factors
        + p
        + n_efa_factors
        + (n_covariates + 1)
        + q * (q - 1) / 2
        + if means_fixed_zero { 0 } else { q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    pub(crate) fn toy_cfa(p: usize, q: usize) -> (FactorStructure, CfaParams) {
        let structure = FactorStructure::simple(p, q).unwrap();
        let mut loadings = DMatrix::zeros(p, q);
        for j in 0..p {
            for &k in &structure.free_cols(j) {
                loadings[(j, k)] = 0.6 + 0.01 * j as f64;
            }
        }
        let mut corr = DMatrix::identity(q, q);
        for i in 0..q {
            for j in 0..i {
                corr[(i, j)] = 0.2;
                corr[(j, i)] = 0.2;
            }
        }
        let params = CfaParams {
            loadings,
            factor_corr: corr,
            uniquenesses: DVector::from_element(p, 0.5),
            factor_means: DVector::zeros(q),
            means_fixed_zero: true,
        };
        (structure, params)
    }

    #[test]
    fn zero_loadings_identity_noise_gives_identity() {
        let (_, mut cfa) = toy_cfa(4, 2);
        cfa.loadings.fill(0.0);
        cfa.uniquenesses.fill(1.0);
        let cov = assemble_cfa_cov(&cfa).unwrap();
        assert_eq!(cov, DMatrix::identity(4, 4));
    }

    #[test]
    fn two_item_hand_case() {
        // p = 2, q = 1, loadings (1, 1), unit factor variance, unit noise.
        let structure = FactorStructure::new(2, 1, &[1, 1]).unwrap();
        let cfa = CfaParams {
            loadings: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            factor_corr: DMatrix::identity(1, 1),
            uniquenesses: DVector::from_element(2, 1.0),
            factor_means: DVector::zeros(1),
            means_fixed_zero: true,
        };
        cfa.validate(&structure).unwrap();
        let cov = assemble_cfa_cov(&cfa).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn efa_hand_case_and_scaled_identity() {
        let efa = EfaParams {
            loadings: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            uniquenesses: DVector::from_element(2, 1.0),
            factor_means: DVector::zeros(1),
        };
        let cov = assemble_efa_cov(&efa).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));

        let efa0 = EfaParams {
            loadings: DMatrix::zeros(4, 2),
            uniquenesses: DVector::from_element(4, 0.85),
            factor_means: DVector::zeros(2),
        };
        let cov0 = assemble_efa_cov(&efa0).unwrap();
        assert_eq!(cov0, DMatrix::identity(4, 4) * 0.85);
    }

    #[test]
    fn cfa_cov_matches_naive_triple_product() {
        // Independent oracle: elementwise triple sum, no matrix routines.
        let (_, cfa) = toy_cfa(9, 3);
        let cov = assemble_cfa_cov(&cfa).unwrap();
        let (p, q) = (cfa.p(), cfa.q());
        for a in 0..p {
            for b in 0..p {
                let mut s = 0.0;
                for i in 0..q {
                    for j in 0..q {
                        s += cfa.loadings[(a, i)] * cfa.factor_corr[(i, j)] * cfa.loadings[(b, j)];
                    }
                }
                if a == b {
                    s += cfa.uniquenesses[a];
                }
                assert_relative_eq!(cov[(a, b)], s, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn efa_cov_invariant_under_rotation() {
        let mut rng = crate::rng::stream_rng(7, &[0]);
        let k = 3;
        let efa = EfaParams {
            loadings: DMatrix::from_fn(8, k, |_, _| rng.random_range(-1.0..1.0)),
            uniquenesses: DVector::from_fn(8, |_, _| rng.random_range(0.3..1.0)),
            factor_means: DVector::zeros(k),
        };
        // Random orthogonal Q from QR of a random matrix.
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let q_mat = m.qr().q();
        let rotated = EfaParams {
            loadings: &efa.loadings * &q_mat,
            uniquenesses: efa.uniquenesses.clone(),
            factor_means: efa.factor_means.clone(),
        };
        let a = assemble_efa_cov(&efa).unwrap();
        let b = assemble_efa_cov(&rotated).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn count_params_matches_paper_formula_on_grid() {
        for p in (4..=40).step_by(6) {
            for q in 1..=5usize.min(p - 1) {
                for k in 1..=6 {
                    for c in 0..=3 {
                        let s = FactorStructure::simple(p, q).unwrap();
                        let got = count_params(&s, k, c, false);
                        let formula = 3 * p + p * k + q + k + c + 1 + q * (q - 1) / 2;
                        assert_eq!(got, formula, "p={p} q={q} k={k} c={c}");
                    }
                }
            }
        }
    }

    #[test]
    fn count_params_spot_values() {
        let s = FactorStructure::simple(42, 5).unwrap();
        assert_eq!(count_params(&s, 1, 0, false), 185);
        assert_eq!(count_params(&s, 1, 0, true), 180);
        let s2 = FactorStructure::simple(30, 1).unwrap();
        assert_eq!(count_params(&s2, 2, 1, false), 155);
    }

    #[test]
    fn validation_rejects_pattern_violation() {
        let (structure, mut cfa) = toy_cfa(6, 2);
        cfa.loadings[(0, 1)] = 0.1; // item 1 is fixed to zero on factor 2
        assert!(cfa.validate(&structure).is_err());
    }
}
