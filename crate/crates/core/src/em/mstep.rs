//! M-steps: responsibility-weighted complete-data maximizers for each
//! parameter block, and a Newton update for the mixture coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, symmetrize, SpdChol};
use crate::model::{CfaParams, Dataset, EfaParams, FactorStructure, MixtureReg};

use super::estep::EStepMoments;

/// Total weight below which a component is considered empty.
const MIN_COMPONENT_WEIGHT: f64 = 1e-8;

/// Weighted sufficient statistics shared by both factor blocks:
/// `a = sum_i w_i E[f f^T | y_i]` and `b = Y^T diag(w) M` where `M` holds the
/// conditional factor means row-wise.
fn factor_stats(
    data: &Dataset,
    weights: &DVector<f64>,
    cond_means: &DMatrix<f64>,
    cond_cov: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = data.n();
    let total = pairwise_sum(weights.as_slice());
    let mut weighted_means = cond_means.clone();
    for i in 0..n {
        let w = weights[i];
        for k in 0..weighted_means.ncols() {
            weighted_means[(i, k)] *= w;
        }
    }
    let mut a = cond_cov * total + cond_means.transpose() * &weighted_means;
    symmetrize(&mut a);
    let b = data.responses.transpose() * &weighted_means;
    // sum_i w_i y_ij^2 per item.
    let mut yy = DVector::zeros(data.p());
    for j in 0..data.p() {
        let mut s = 0.0;
        for i in 0..n {
            let y = data.responses[(i, j)];
            s += weights[i] * y * y;
        }
        yy[j] = s;
    }
    (total, a, b, yy)
}

/// CFA block update from E-step moments: pattern-restricted weighted normal
/// equations per item, floored uniquenesses, factor means (unless fixed),
/// and the factor second-moment matrix rescaled to exact unit diagonal with
/// the compensating column scaling absorbed into the loadings (and the
/// inverse scaling into the means), which leaves the implied moments — and
/// hence the objective — unchanged.
pub fn m_step_cfa(
    data: &Dataset,
    moments: &EStepMoments,
    structure: &FactorStructure,
    means_fixed_zero: bool,
    ridge: f64,
    uniqueness_floor: f64,
) -> Result<CfaParams> {
    let weights = moments.responsibilities.column(0).clone_owned();
    m_step_cfa_weighted(
        data,
        &weights,
        &moments.cfa_means,
        &moments.cfa_cond_cov,
        structure,
        means_fixed_zero,
        ridge,
        uniqueness_floor,
    )
}

/// The CFA update with explicit weights; also drives the single-component
/// baseline fit (weights pinned to one).
#[allow(clippy::too_many_arguments)]
pub(crate) fn m_step_cfa_weighted(
    data: &Dataset,
    weights: &DVector<f64>,
    cond_means: &DMatrix<f64>,
    cond_cov: &DMatrix<f64>,
    structure: &FactorStructure,
    means_fixed_zero: bool,
    ridge: f64,
    uniqueness_floor: f64,
) -> Result<CfaParams> {
    let p = data.p();
    let q = structure.q();
    let (total, a, b, yy) = factor_stats(data, weights, cond_means, cond_cov);
    if total < MIN_COMPONENT_WEIGHT {
        return Err(Error::EmptyComponent { component: "cfa" });
    }

    let mut loadings = DMatrix::zeros(p, q);
    let mut uniquenesses = DVector::zeros(p);
    for j in 0..p {
        let free = structure.free_cols(j);
        let m = free.len();
        let mut a_sub = DMatrix::zeros(m, m);
        let mut b_sub = DVector::zeros(m);
        for (r, &kr) in free.iter().enumerate() {
            b_sub[r] = b[(j, kr)];
            for (c, &kc) in free.iter().enumerate() {
                a_sub[(r, c)] = a[(kr, kc)];
            }
        }
        let chol = SpdChol::factor(&a_sub)
            .map_err(|_| Error::SingularNormalEquations { item: j + 1 })?;
        let lam = chol.solve_vec(&b_sub);
        for (r, &k) in free.iter().enumerate() {
            loadings[(j, k)] = lam[r];
        }
        // Residual second moment; lam^T a lam = lam^T b at the solution.
        let resid = (yy[j] - lam.dot(&b_sub)) / total;
        uniquenesses[j] = (resid + ridge).max(uniqueness_floor);
    }

    let mut factor_means = DVector::zeros(q);
    if !means_fixed_zero {
        for k in 0..q {
            let col: Vec<f64> = (0..data.n()).map(|i| weights[i] * cond_means[(i, k)]).collect();
            factor_means[k] = pairwise_sum(&col) / total;
        }
    }

    let mut phi_raw = &a / total - &factor_means * factor_means.transpose();
    symmetrize(&mut phi_raw);
    let mut scale = DVector::zeros(q);
    for k in 0..q {
        let d = phi_raw[(k, k)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Degenerate(format!(
                "CFA factor {} has nonpositive second moment",
                k + 1
            )));
        }
        scale[k] = d.sqrt();
    }
    let mut factor_corr = phi_raw;
    for r in 0..q {
        for c in 0..q {
            factor_corr[(r, c)] /= scale[r] * scale[c];
        }
        factor_corr[(r, r)] = 1.0;
    }
    for j in 0..p {
        for k in 0..q {
            loadings[(j, k)] *= scale[k];
        }
    }
    for k in 0..q {
        factor_means[k] /= scale[k];
    }

    Ok(CfaParams {
        loadings,
        factor_corr,
        uniquenesses,
        factor_means,
        means_fixed_zero,
    })
}

/// EFA block update: unrestricted weighted normal equations with identity
/// factor covariance (no rescaling), floored uniquenesses, free means.
pub fn m_step_efa(
    data: &Dataset,
    moments: &EStepMoments,
    ridge: f64,
    uniqueness_floor: f64,
) -> Result<EfaParams> {
    let weights = moments.responsibilities.column(1).clone_owned();
    let (total, a, b, yy) = factor_stats(data, &weights, &moments.efa_means, &moments.efa_cond_cov);
    if total < MIN_COMPONENT_WEIGHT {
        return Err(Error::EmptyComponent { component: "efa" });
    }
    let chol = SpdChol::factor(&a)
        .map_err(|_| Error::Degenerate("EFA normal equations are singular".into()))?;
    // One factorization serves all item rows.
    let loadings = chol.solve_mat(&b.transpose()).transpose();

    let p = data.p();
    let mut uniquenesses = DVector::zeros(p);
    for j in 0..p {
        let mut lb = 0.0;
        for k in 0..loadings.ncols() {
            lb += loadings[(j, k)] * b[(j, k)];
        }
        uniquenesses[j] = ((yy[j] - lb) / total + ridge).max(uniqueness_floor);
    }

    let k = moments.efa_means.ncols();
    let mut factor_means = DVector::zeros(k);
    for c in 0..k {
        let col: Vec<f64> = (0..data.n())
            .map(|i| weights[i] * moments.efa_means[(i, c)])
            .collect();
        factor_means[c] = pairwise_sum(&col) / total;
    }

    Ok(EfaParams {
        loadings,
        uniquenesses,
        factor_means,
    })
}

/// Outcome of the Newton update for the mixture coefficients.
#[derive(Debug, Clone)]
pub struct BetaUpdate {
    pub reg: MixtureReg,
    /// Set when the linear predictor had to be clamped (quasi-separation).
    pub separation_flagged: bool,
    /// Set when the Hessian needed a ridge to stay invertible.
    pub hessian_ridged: bool,
    pub n_iter: usize,
}

const BETA_GRAD_TOL: f64 = 1e-8;
const BETA_MAX_ITER: usize = 50;
const BETA_PREDICTOR_CAP: f64 = 30.0;

/// Maximize `sum_i [ r_i log pi_i(beta) + (1 - r_i) log(1 - pi_i(beta)) ]`
/// (`r` = CFA responsibilities) by Newton steps with step-halving; the
/// weighted-logistic normal equations are solved via Cholesky.
pub fn m_step_beta(
    design: &DMatrix<f64>,
    responsibilities: &DMatrix<f64>,
    init: &MixtureReg,
) -> Result<BetaUpdate> {
    let n = design.nrows();
    let d = design.ncols();
    if init.beta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {} for a design with {} columns",
            init.beta.len(),
            d
        )));
    }
    if responsibilities.nrows() != n {
        return Err(Error::DimensionMismatch("responsibility rows".into()));
    }
    if (0..n).any(|i| design[(i, 0)] != 1.0) {
        return Err(Error::InvalidParameter(
            "design must have a constant first column of ones".into(),
        ));
    }
    let r = responsibilities.column(0).clone_owned();

    let objective = |beta: &DVector<f64>| -> f64 {
        let t = design * beta;
        let terms: Vec<f64> = (0..n)
            .map(|i| {
                let ti = t[i];
                // r log pi + (1-r) log(1-pi), stable in both tails.
                let log_pi = -softplus(-ti);
                let log_om = -softplus(ti);
                r[i] * log_pi + (1.0 - r[i]) * log_om
            })
            .collect();
        pairwise_sum(&terms)
    };

    let mut beta = init.beta.clone();
    let mut separation_flagged = clamp_predictor(design, &mut beta);
    let mut hessian_ridged = false;
    let mut f_cur = objective(&beta);
    let mut n_iter = 0;

    for _ in 0..BETA_MAX_ITER {
        let t = design * &beta;
        let pi = t.map(crate::model::logistic);
        let resid = &r - &pi;
        let grad = design.transpose() * &resid;
        if grad.amax() <= BETA_GRAD_TOL {
            break;
        }
        n_iter += 1;

        let mut xtwx = DMatrix::zeros(d, d);
        for i in 0..n {
            let w = pi[i] * (1.0 - pi[i]);
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let xa = design[(i, a)] * w;
                for b in 0..d {
                    xtwx[(a, b)] += xa * design[(i, b)];
                }
            }
        }
        let direction = match SpdChol::factor(&xtwx) {
            Ok(ch) => ch.solve_vec(&grad),
            Err(_) => {
                hessian_ridged = true;
                for a in 0..d {
                    xtwx[(a, a)] += 1e-8;
                }
                SpdChol::factor(&xtwx)
                    .map_err(|_| Error::Degenerate("mixture Hessian is singular".into()))?
                    .solve_vec(&grad)
            }
        };

        // Step-halving: never accept a likelihood decrease.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = &beta + &direction * step;
            let clamped = clamp_predictor(design, &mut candidate);
            let f_new = objective(&candidate);
            if f_new >= f_cur - 1e-12 * (1.0 + f_cur.abs()) {
                beta = candidate;
                f_cur = f_new;
                separation_flagged |= clamped;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(BetaUpdate {
        reg: MixtureReg {
            beta,
            covariate_names: init.covariate_names.clone(),
        },
        separation_flagged,
        hessian_ridged,
        n_iter,
    })
}

/// Rescale `beta` so that `max_i |x_i . beta| <= 30`; returns whether a
/// clamp was applied (the quasi-separation flag).
fn clamp_predictor(design: &DMatrix<f64>, beta: &mut DVector<f64>) -> bool {
    let t = design * &*beta;
    let worst = t.amax();
    if worst > BETA_PREDICTOR_CAP {
        *beta *= BETA_PREDICTOR_CAP / worst;
        true
    } else {
        false
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Column-standardize with divisor-n variance so the factor rescale in
    /// the M-step is the identity.
    fn standardized_factors(n: usize, q: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::stream_rng(seed, &[1]);
        let mut eta = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut rng));
        for k in 0..q {
            let mean = eta.column(k).sum() / n as f64;
            let var = eta.column(k).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                eta[(i, k)] = (eta[(i, k)] - mean) / sd;
            }
        }
        eta
    }

    fn ones_moments(n: usize, eta: &DMatrix<f64>, xi: &DMatrix<f64>, cfa_col: f64) -> EStepMoments {
        let mut responsibilities = DMatrix::zeros(n, 2);
        for i in 0..n {
            responsibilities[(i, 0)] = cfa_col;
            responsibilities[(i, 1)] = 1.0 - cfa_col;
        }
        EStepMoments {
            responsibilities,
            cfa_means: eta.clone(),
            efa_means: xi.clone(),
            cfa_cond_cov: DMatrix::zeros(eta.ncols(), eta.ncols()),
            efa_cond_cov: DMatrix::zeros(xi.ncols(), xi.ncols()),
            loglik: 0.0,
        }
    }

    #[test]
    fn cfa_recovers_noiseless_loadings() {
        let (n, p, q) = (400, 9, 3);
        let structure = FactorStructure::simple(p, q).unwrap();
        let mut rng = crate::rng::stream_rng(11, &[2]);
        let mut truth = DMatrix::zeros(p, q);
        for j in 0..p {
            for &k in &structure.free_cols(j) {
                truth[(j, k)] = rng.random_range(0.3..0.9);
            }
        }
        let eta = standardized_factors(n, q, 12);
        let y = &eta * truth.transpose(); // noiseless
        let data = Dataset::intercept_only(y, None).unwrap();
        let moments = ones_moments(n, &eta, &DMatrix::zeros(n, 1), 1.0);
        let cfa =
            m_step_cfa(&data, &moments, &structure, false, 0.0, 1e-4).unwrap();
        for j in 0..p {
            for k in 0..q {
                assert_relative_eq!(cfa.loadings[(j, k)], truth[(j, k)], epsilon = 1e-8);
            }
        }
        // Enforced constraints: exact unit diagonal, floored uniquenesses.
        for k in 0..q {
            assert_eq!(cfa.factor_corr[(k, k)], 1.0);
        }
        assert!(cfa.uniquenesses.iter().all(|&t| t >= 1e-4));
    }

    #[test]
    fn efa_recovers_noiseless_loadings_up_to_sign() {
        let (n, p) = (300, 6);
        let mut rng = crate::rng::stream_rng(21, &[3]);
        let truth = DMatrix::from_fn(p, 1, |_, _| rng.random_range(0.3..0.9));
        let xi = standardized_factors(n, 1, 22);
        let y = &xi * truth.transpose();
        let data = Dataset::intercept_only(y, None).unwrap();

        let moments = ones_moments(n, &DMatrix::zeros(n, 1), &xi, 0.0);
        let efa = m_step_efa(&data, &moments, 0.0, 1e-4).unwrap();
        for j in 0..p {
            assert_relative_eq!(efa.loadings[(j, 0)], truth[(j, 0)], epsilon = 1e-6);
        }
        assert!(efa.uniquenesses.iter().all(|&t| t >= 1e-4));

        // Feeding the sign-flipped factor recovers the negated loadings.
        let moments_neg = ones_moments(n, &DMatrix::zeros(n, 1), &(-&xi), 0.0);
        let efa_neg = m_step_efa(&data, &moments_neg, 0.0, 1e-4).unwrap();
        for j in 0..p {
            assert_relative_eq!(efa_neg.loadings[(j, 0)], -truth[(j, 0)], epsilon = 1e-6);
        }
    }

    #[test]
    fn efa_empty_component_errors() {
        let n = 10;
        let y = DMatrix::from_element(n, 3, 0.5);
        let data = Dataset::intercept_only(y, None).unwrap();
        let moments = ones_moments(n, &DMatrix::zeros(n, 1), &DMatrix::zeros(n, 1), 1.0);
        match m_step_efa(&data, &moments, 1e-6, 1e-4) {
            Err(Error::EmptyComponent { component }) => assert_eq!(component, "efa"),
            other => panic!("expected empty component, got {other:?}"),
        }
    }

    #[test]
    fn beta_intercept_only_closed_form() {
        let n = 200;
        let design = DMatrix::from_element(n, 1, 1.0);
        let mut resp = DMatrix::zeros(n, 2);
        for i in 0..n {
            let r = if i < 160 { 1.0 } else { 0.0 }; // mean 0.8
            resp[(i, 0)] = r;
            resp[(i, 1)] = 1.0 - r;
        }
        let up = m_step_beta(&design, &resp, &MixtureReg::intercept_only(0.0)).unwrap();
        assert_relative_eq!(up.reg.beta[0], (0.8f64 / 0.2).ln(), epsilon = 1e-6);
        assert!(!up.separation_flagged);
    }

    #[test]
    fn beta_fixed_point_is_recovered() {
        // With r_i = pi_i(beta*), beta* solves the score equations.
        let n = 500;
        let mut rng = crate::rng::stream_rng(31, &[4]);
        let design = DMatrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let truth = DVector::from_column_slice(&[0.4, -0.9]);
        let t = &design * &truth;
        let mut resp = DMatrix::zeros(n, 2);
        for i in 0..n {
            let pi = crate::model::logistic(t[i]);
            resp[(i, 0)] = pi;
            resp[(i, 1)] = 1.0 - pi;
        }
        let init = MixtureReg {
            beta: DVector::zeros(2),
            covariate_names: vec!["x".into()],
        };
        let up = m_step_beta(&design, &resp, &init).unwrap();
        assert_relative_eq!(up.reg.beta[0], truth[0], epsilon = 1e-6);
        assert_relative_eq!(up.reg.beta[1], truth[1], epsilon = 1e-6);
    }

    #[test]
    fn beta_all_half_gives_zero_intercept() {
        let n = 50;
        let design = DMatrix::from_element(n, 1, 1.0);
        let resp = DMatrix::from_element(n, 2, 0.5);
        let up = m_step_beta(&design, &resp, &MixtureReg::intercept_only(0.0)).unwrap();
        assert_eq!(up.reg.beta[0], 0.0);
    }

    #[test]
    fn beta_separation_is_clamped_and_flagged() {
        // Perfectly separated responsibilities drive beta unbounded.
        let n = 100;
        let mut rng = crate::rng::stream_rng(41, &[5]);
        let design = DMatrix::from_fn(n, 2, |i, c| {
            if c == 0 {
                1.0
            } else if i < 50 {
                rng.random_range(1.0..2.0)
            } else {
                rng.random_range(-2.0..-1.0)
            }
        });
        let mut resp = DMatrix::zeros(n, 2);
        for i in 0..n {
            resp[(i, 0)] = if i < 50 { 1.0 } else { 0.0 };
            resp[(i, 1)] = 1.0 - resp[(i, 0)];
        }
        let init = MixtureReg {
            beta: DVector::zeros(2),
            covariate_names: vec!["x".into()],
        };
        let up = m_step_beta(&design, &resp, &init).unwrap();
        assert!(up.separation_flagged);
        let t = &design * &up.reg.beta;
        assert!(t.amax() <= BETA_PREDICTOR_CAP + 1e-9);
    }
}
