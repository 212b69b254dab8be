//! Mixture density, posterior classification, and the per-observation
//! evaluation context shared with the E-step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{pairwise_sum, SpdChol};
use crate::model::{Dataset, MixtureParams, MixtureReg};

const LN_2PI: f64 = 1.837877066409345483560659472811; // ln(2*pi)

/// Numerically safe logistic function; exact 0/1 at extreme arguments.
pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(exp(a) + exp(b))`, tolerating `-inf` inputs.
pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Per-observation mixture weights `pi_i = logistic(x_i . beta)`.
pub fn mixture_weights(design: &DMatrix<f64>, reg: &MixtureReg) -> Result<DVector<f64>> {
    if design.ncols() != reg.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has length {}",
            design.ncols(),
            reg.beta.len()
        )));
    }
    let t = design * &reg.beta;
    Ok(t.map(logistic))
}

/// Per-observation `(log pi_i, log(1 - pi_i))`, computed directly from the
/// linear predictor so neither side loses precision near 0 or 1.
pub fn log_mixture_weights(
    design: &DMatrix<f64>,
    reg: &MixtureReg,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if design.ncols() != reg.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has length {}",
            design.ncols(),
            reg.beta.len()
        )));
    }
    let t = design * &reg.beta;
    let log_pi = t.map(|v| -softplus(-v));
    let log_one_minus = t.map(|v| -softplus(v));
    Ok((log_pi, log_one_minus))
}

/// Log-density of a multivariate normal, via a triangular factorization.
pub fn mvn_logdensity(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let p = y.len();
    if mean.len() != p || cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch(
            "mvn_logdensity argument shapes".into(),
        ));
    }
    let chol = SpdChol::factor(cov)?;
    let z = chol.forward(&(y - mean));
    Ok(-0.5 * (p as f64 * LN_2PI + chol.log_det() + z.dot(&z)))
}

/// Factored per-component state for repeated density / posterior evaluation
/// over many observations: component means, Cholesky factors, log-weights.
///
/// Built once per parameter value; all per-observation methods are pure and
/// safe to call concurrently.
pub struct ComponentContext {
    pub(crate) mean_cfa: DVector<f64>,
    pub(crate) mean_efa: DVector<f64>,
    pub(crate) chol_cfa: SpdChol,
    pub(crate) chol_efa: SpdChol,
    log_norm_cfa: f64, // -(p ln 2pi + ln det) / 2
    log_norm_efa: f64,
    log_pi: DVector<f64>,
    log_one_minus_pi: DVector<f64>,
}

impl ComponentContext {
    pub fn new(data: &Dataset, params: &MixtureParams) -> Result<Self> {
        let p = data.p();
        if params.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "data has p = {} items but parameters have p = {}",
                p,
                params.p()
            )));
        }
        let cov_cfa = params.cfa.implied_cov();
        let chol_cfa = SpdChol::factor(&cov_cfa)?;
        let cov_efa = params.efa.implied_cov();
        let chol_efa = SpdChol::factor(&cov_efa)?;
        let (log_pi, log_one_minus_pi) = log_mixture_weights(&data.design, &params.reg)?;
        let log_norm_cfa = -0.5 * (p as f64 * LN_2PI + chol_cfa.log_det());
        let log_norm_efa = -0.5 * (p as f64 * LN_2PI + chol_efa.log_det());
        Ok(Self {
            mean_cfa: params.cfa.implied_mean(),
            mean_efa: params.efa.implied_mean(),
            chol_cfa,
            chol_efa,
            log_norm_cfa,
            log_norm_efa,
            log_pi,
            log_one_minus_pi,
        })
    }

    /// `(log N_cfa(y_i), log N_efa(y_i))`.
    pub fn log_densities(&self, y: &DVector<f64>) -> (f64, f64) {
        let z1 = self.chol_cfa.forward(&(y - &self.mean_cfa));
        let z2 = self.chol_efa.forward(&(y - &self.mean_efa));
        (
            self.log_norm_cfa - 0.5 * z1.dot(&z1),
            self.log_norm_efa - 0.5 * z2.dot(&z2),
        )
    }

    /// Weighted log-terms `(log pi_i + log N_cfa, log(1-pi_i) + log N_efa)`.
    pub fn log_terms(&self, i: usize, y: &DVector<f64>) -> (f64, f64) {
        let (l1, l2) = self.log_densities(y);
        (self.log_pi[i] + l1, self.log_one_minus_pi[i] + l2)
    }

    /// Per-observation responsibilities and log-likelihood contribution.
    pub fn responsibilities(&self, i: usize, y: &DVector<f64>) -> (f64, f64, f64) {
        let (a, b) = self.log_terms(i, y);
        let lse = log_sum_exp(a, b);
        (respons(a, lse), respons(b, lse), lse)
    }
}

fn respons(log_term: f64, lse: f64) -> f64 {
    if log_term == f64::NEG_INFINITY {
        0.0
    } else {
        (log_term - lse).exp()
    }
}

/// Observed-data log-likelihood
/// `sum_i log[ pi_i N_cfa(y_i) + (1 - pi_i) N_efa(y_i) ]`.
///
/// Each term is evaluated in log space (log-sum-exp); the sum over
/// observations uses the fixed pairwise order of
/// [`pairwise_sum`](crate::linalg::pairwise_sum), so parallel and sequential
/// builds agree bit for bit.
pub fn mixture_loglik(data: &Dataset, params: &MixtureParams) -> Result<f64> {
    let ctx = ComponentContext::new(data, params)?;
    let terms = exec::map_indexed(data.n(), |i| {
        let y = data.row(i);
        let (a, b) = ctx.log_terms(i, &y);
        log_sum_exp(a, b)
    });
    Ok(pairwise_sum(&terms))
}

/// Posterior component probabilities, one `(P(z=1|y), P(z=0|y))` row per
/// observation, computed in log space and normalized.
pub fn posterior_probs(data: &Dataset, params: &MixtureParams) -> Result<DMatrix<f64>> {
    let ctx = ComponentContext::new(data, params)?;
    let rows = exec::map_indexed(data.n(), |i| {
        let (r1, r0, _) = ctx.responsibilities(i, &data.row(i));
        [r1, r0]
    });
    let mut out = DMatrix::zeros(data.n(), 2);
    for (i, r) in rows.iter().enumerate() {
        out[(i, 0)] = r[0];
        out[(i, 1)] = r[1];
    }
    Ok(out)
}

/// Hard assignments from responsibilities: `1` (CFA, non-aberrant) when the
/// first column is at least one half — ties go to the CFA component — else
/// `0` (EFA, aberrant).
pub fn classify(responsibilities: &DMatrix<f64>) -> Vec<u8> {
    (0..responsibilities.nrows())
        .map(|i| u8::from(responsibilities[(i, 0)] >= 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CfaParams, EfaParams, FactorStructure};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn toy_params(p: usize, q: usize, k: usize, seed: u64) -> (FactorStructure, MixtureParams) {
        let mut rng = crate::rng::stream_rng(seed, &[11]);
        let structure = FactorStructure::simple(p, q).unwrap();
        let mut loadings = DMatrix::zeros(p, q);
        for j in 0..p {
            for &c in &structure.free_cols(j) {
                loadings[(j, c)] = rng.random_range(0.3..0.9);
            }
        }
        let mut corr = DMatrix::identity(q, q);
        for i in 0..q {
            for j in 0..i {
                let v = rng.random_range(-0.3..0.3);
                corr[(i, j)] = v;
                corr[(j, i)] = v;
            }
        }
        let cfa = CfaParams {
            loadings,
            factor_corr: corr,
            uniquenesses: DVector::from_fn(p, |_, _| rng.random_range(0.4..1.0)),
            factor_means: DVector::from_fn(q, |_, _| rng.random_range(-0.5..0.5)),
            means_fixed_zero: false,
        };
        let efa = EfaParams {
            loadings: DMatrix::from_fn(p, k, |_, _| rng.random_range(-0.8..0.8)),
            uniquenesses: DVector::from_fn(p, |_, _| rng.random_range(0.5..1.0)),
            factor_means: DVector::from_fn(k, |_, _| rng.random_range(0.5..2.0)),
        };
        let params = MixtureParams {
            cfa,
            efa,
            reg: MixtureReg::intercept_only(0.4),
        };
        params.validate(&structure).unwrap();
        (structure, params)
    }

    fn toy_data(params: &MixtureParams, n: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream_rng(seed, &[12]);
        let p = params.p();
        let responses = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        Dataset::intercept_only(responses, None).unwrap()
    }

    #[test]
    fn logistic_cases() {
        assert_eq!(logistic(0.0), 0.5);
        // beta0 = log(0.8/0.2) gives pi = 0.8.
        assert_relative_eq!(logistic((0.8f64 / 0.2).ln()), 0.8, epsilon = 1e-15);
        // No overflow far out in the tails; within 1e-12 of 1 at t = 40.
        assert!((logistic(40.0) - 1.0).abs() < 1e-12);
        assert!(logistic(700.0).is_finite());
        assert!(logistic(-700.0) >= 0.0);
        // High-precision oracle at t = 40: 1 - pi = exp(-40)/(1+exp(-40)).
        let one_minus = (-40.0f64).exp() / (1.0 + (-40.0f64).exp());
        assert_relative_eq!(logistic(40.0), 1.0 - one_minus, epsilon = 1e-15);
    }

    #[test]
    fn mvn_logdensity_standard_cases() {
        let y = DVector::from_element(1, 0.0);
        let m = DVector::from_element(1, 0.0);
        let c = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(
            mvn_logdensity(&y, &m, &c).unwrap(),
            -0.5 * LN_2PI,
            epsilon = 1e-12
        );
        let y2 = DVector::from_column_slice(&[0.3, -0.2]);
        let c2 = DMatrix::identity(2, 2);
        assert_relative_eq!(
            mvn_logdensity(&y2, &y2, &c2).unwrap(),
            -LN_2PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn mvn_logdensity_matches_inverse_formula() {
        // Naive oracle: determinant + explicit inverse.
        let mut rng = crate::rng::stream_rng(3, &[5]);
        for trial in 0..10 {
            let p = 2 + trial % 4;
            let b: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let cov = &b * b.transpose() + DMatrix::identity(p, p) * 0.4;
            let y = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
            let mean = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let inv = cov.clone().try_inverse().unwrap();
            let d = &y - &mean;
            let log_det: f64 = cov.determinant().ln();
            let oracle = -0.5 * (p as f64 * LN_2PI + log_det + (&inv * &d).dot(&d));
            assert_relative_eq!(
                mvn_logdensity(&y, &mean, &cov).unwrap(),
                oracle,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn mvn_logdensity_names_offending_minor() {
        let y = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match mvn_logdensity(&y, &y, &cov) {
            Err(Error::NotPositiveDefinite { minor }) => assert_eq!(minor, 2),
            other => panic!("expected non-SPD error, got {other:?}"),
        }
    }

    #[test]
    fn identical_components_collapse_to_single_gaussian() {
        // Same mean and covariance in both components: the mixture density is
        // the component density regardless of beta.
        let p = 4;
        let structure = FactorStructure::simple(p, 1).unwrap();
        let loadings = DMatrix::from_column_slice(p, 1, &[0.7, 0.6, 0.5, 0.4]);
        let uniq = DVector::from_element(p, 0.6);
        let cfa = CfaParams {
            loadings: loadings.clone(),
            factor_corr: DMatrix::identity(1, 1),
            uniquenesses: uniq.clone(),
            factor_means: DVector::zeros(1),
            means_fixed_zero: true,
        };
        let efa = EfaParams {
            loadings,
            uniquenesses: uniq,
            factor_means: DVector::zeros(1),
        };
        let cov = cfa.implied_cov();
        let mean = cfa.implied_mean();
        for beta0 in [-2.0, 0.0, 3.0] {
            let params = MixtureParams {
                cfa: cfa.clone(),
                efa: efa.clone(),
                reg: MixtureReg::intercept_only(beta0),
            };
            params.validate(&structure).unwrap();
            let data = toy_data(&params, 20, 9);
            let ll = mixture_loglik(&data, &params).unwrap();
            let single: f64 = (0..data.n())
                .map(|i| mvn_logdensity(&data.row(i), &mean, &cov).unwrap())
                .sum();
            assert_relative_eq!(ll, single, epsilon = 1e-9);

            // Equal densities cancel: responsibilities are (pi, 1 - pi).
            let resp = posterior_probs(&data, &params).unwrap();
            let pi = logistic(beta0);
            for i in 0..data.n() {
                assert_relative_eq!(resp[(i, 0)], pi, epsilon = 1e-12);
                assert_relative_eq!(resp[(i, 1)], 1.0 - pi, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn loglik_matches_bruteforce_toy() {
        let (_, params) = toy_params(5, 2, 2, 21);
        let data = toy_data(&params, 3, 22);
        let pi = mixture_weights(&data.design, &params.reg).unwrap();
        let cov1 = params.cfa.implied_cov();
        let cov2 = params.efa.implied_cov();
        let m1 = params.cfa.implied_mean();
        let m2 = params.efa.implied_mean();
        let mut oracle = 0.0;
        for i in 0..3 {
            let y = data.row(i);
            let d1 = mvn_logdensity(&y, &m1, &cov1).unwrap().exp();
            let d2 = mvn_logdensity(&y, &m2, &cov2).unwrap().exp();
            oracle += (pi[i] * d1 + (1.0 - pi[i]) * d2).ln();
        }
        assert_relative_eq!(
            mixture_loglik(&data, &params).unwrap(),
            oracle,
            epsilon = 1e-10
        );
    }

    #[test]
    fn posteriors_match_bayes_ratio_oracle() {
        let (_, params) = toy_params(5, 2, 2, 31);
        let data = toy_data(&params, 6, 32);
        let resp = posterior_probs(&data, &params).unwrap();
        let pi = mixture_weights(&data.design, &params.reg).unwrap();
        let cov1 = params.cfa.implied_cov();
        let cov2 = params.efa.implied_cov();
        let m1 = params.cfa.implied_mean();
        let m2 = params.efa.implied_mean();
        for i in 0..data.n() {
            let y = data.row(i);
            let d1 = mvn_logdensity(&y, &m1, &cov1).unwrap().exp();
            let d2 = mvn_logdensity(&y, &m2, &cov2).unwrap().exp();
            let post = pi[i] * d1 / (pi[i] * d1 + (1.0 - pi[i]) * d2);
            assert_relative_eq!(resp[(i, 0)], post, epsilon = 1e-10);
            assert_relative_eq!(resp[(i, 0)] + resp[(i, 1)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_weight_gives_exact_unit_responsibility() {
        // x . beta far beyond the underflow point of exp: pi is exactly 1 and
        // the dominated responsibility is exactly 0.
        let (_, mut params) = toy_params(4, 1, 1, 41);
        params.reg = MixtureReg::intercept_only(800.0);
        let data = toy_data(&params, 4, 42);
        let resp = posterior_probs(&data, &params).unwrap();
        for i in 0..data.n() {
            assert_eq!(resp[(i, 0)], 1.0);
            assert_eq!(resp[(i, 1)], 0.0);
        }
    }

    #[test]
    fn dominated_component_stays_finite() {
        // Push the EFA component ~300+ log-units below the CFA one.
        let (_, mut params) = toy_params(4, 1, 1, 51);
        params.efa.factor_means = DVector::from_element(1, 60.0);
        let data = toy_data(&params, 5, 52);
        let resp = posterior_probs(&data, &params).unwrap();
        for i in 0..data.n() {
            assert!(resp[(i, 1)].is_finite());
            assert!(resp[(i, 1)] >= 0.0);
            assert!(resp[(i, 0)] <= 1.0);
        }
    }

    #[test]
    fn loglik_invariant_under_efa_rotation() {
        let (_, params) = toy_params(7, 2, 3, 61);
        let data = toy_data(&params, 40, 62);
        let base = mixture_loglik(&data, &params).unwrap();
        let mut rng = crate::rng::stream_rng(63, &[1]);
        let k = params.efa.k();
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let q_mat = m.qr().q();
        let mut rotated = params.clone();
        rotated.efa.loadings = &params.efa.loadings * &q_mat;
        rotated.efa.factor_means = q_mat.transpose() * &params.efa.factor_means;
        let rot = mixture_loglik(&data, &rotated).unwrap();
        assert_relative_eq!(base, rot, epsilon = 1e-9);
    }

    #[test]
    fn loglik_invariant_under_cfa_sign_flip() {
        let (structure, params) = toy_params(8, 3, 1, 71);
        let data = toy_data(&params, 30, 72);
        let base = mixture_loglik(&data, &params).unwrap();
        // Flip factor column 1 with matching sign changes in corr and means.
        let mut flipped = params.clone();
        let k = 1;
        for j in 0..flipped.cfa.p() {
            flipped.cfa.loadings[(j, k)] = -flipped.cfa.loadings[(j, k)];
        }
        for j in 0..flipped.cfa.q() {
            if j != k {
                flipped.cfa.factor_corr[(j, k)] = -flipped.cfa.factor_corr[(j, k)];
                flipped.cfa.factor_corr[(k, j)] = -flipped.cfa.factor_corr[(k, j)];
            }
        }
        flipped.cfa.factor_means[k] = -flipped.cfa.factor_means[k];
        flipped.validate(&structure).unwrap();
        let ll = mixture_loglik(&data, &flipped).unwrap();
        assert_relative_eq!(base, ll, epsilon = 1e-9);
    }

    #[test]
    fn classify_rules() {
        let resp = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.5, 0.5, 0.1, 0.9]);
        assert_eq!(classify(&resp), vec![1, 1, 0]);
    }

    #[test]
    fn responsibilities_invariant_to_common_log_shift() {
        // Adding a constant to both log-terms leaves the normalization
        // unchanged: the shared density scale cancels in Bayes' rule.
        for (a, b) in [(-3.0, -1.0), (-300.0, -2.0), (5.0, 5.0)] {
            let lse = log_sum_exp(a, b);
            let base = (respons(a, lse), respons(b, lse));
            let c = 123.456;
            let lse2 = log_sum_exp(a + c, b + c);
            let shifted = (respons(a + c, lse2), respons(b + c, lse2));
            assert_relative_eq!(base.0, shifted.0, epsilon = 1e-12);
            assert_relative_eq!(base.1, shifted.1, epsilon = 1e-12);
        }
    }
}
