//! Baseline single-component CFA fit with CFI/RMSEA, and per-class
//! inter-item correlation matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::em::{m_step_cfa_weighted, EmOptions};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::model::{CfaParams, Dataset, FactorStructure};

/// Normal-theory fit indices of a covariance-structure model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitIndices {
    pub chi_square: f64,
    pub df: i64,
    pub chi_square_null: f64,
    pub df_null: i64,
    pub cfi: f64,
    pub rmsea: f64,
}

/// ML discrepancy `F = log|Sigma| + tr(S Sigma^-1) - log|S| - p`.
fn ml_discrepancy(sample: &DMatrix<f64>, implied: &DMatrix<f64>) -> Result<f64> {
    let p = sample.nrows() as f64;
    let chol_i = SpdChol::factor(implied)?;
    let chol_s = SpdChol::factor(sample)?;
    let trace = chol_i.solve_mat(sample).trace();
    Ok((chol_i.log_det() + trace - chol_s.log_det() - p).max(0.0))
}

/// Maximum-likelihood structured factor fit on the full sample: the
/// mixture's CFA machinery with every responsibility pinned to one, run on
/// centered data with the factor means fixed at zero (the mean structure is
/// saturated). Returns the fitted block and CFI/RMSEA against the
/// independence (diagonal) null model, using `chi^2 = (n - 1) F`.
pub fn fit_cfa_single(
    data: &Dataset,
    structure: &FactorStructure,
    opts: &EmOptions,
) -> Result<(CfaParams, FitIndices)> {
    opts.validate()?;
    let n = data.n();
    let p = data.p();
    if structure.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "structure has p = {} items but data has p = {p}",
            structure.p()
        )));
    }
    if n <= p {
        log::warn!("fitting a {p}-item covariance model on only {n} rows");
    }

    // Center columns; ridge the ML covariance if it is singular.
    let mean = data.responses.row_sum() / n as f64;
    let mut centered = data.responses.clone();
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] -= mean[j];
        }
    }
    let mut sample = centered.transpose() * &centered / n as f64;
    symmetrize(&mut sample);
    if SpdChol::factor(&sample).is_err() {
        log::warn!("sample covariance is singular; adding a small ridge");
        let ridge = 1e-6 * sample.trace().max(1e-12) / p as f64;
        for j in 0..p {
            sample[(j, j)] += ridge;
        }
    }
    let centered_data = Dataset::new(
        centered,
        DMatrix::from_element(n, 1, 1.0),
        None,
        Some(data.item_labels.clone()),
        Vec::new(),
    )?;

    // Pinned-responsibility EM on the structured block.
    let q = structure.q();
    let ones = DVector::from_element(n, 1.0);
    let mut params = initial_cfa(&sample, structure, opts.uniqueness_floor)?;
    let mut last_f = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (cond_means, cond_cov) = cfa_conditional_moments(&centered_data, &params)?;
        params = m_step_cfa_weighted(
            &centered_data,
            &ones,
            &cond_means,
            &cond_cov,
            structure,
            true,
            opts.ridge,
            opts.uniqueness_floor,
        )?;
        let f = ml_discrepancy(&sample, &params.implied_cov())?;
        if (last_f - f).abs() < opts.tol {
            last_f = f;
            break;
        }
        last_f = f;
    }

    let f = last_f;
    let nu_cfa = (structure.n_free() + p + q * (q - 1) / 2) as i64;
    let df = (p * (p + 1) / 2) as i64 - nu_cfa;
    let chi_square = (n as f64 - 1.0) * f;

    // Independence null: diagonal covariance.
    let null_implied = DMatrix::from_diagonal(&sample.diagonal());
    let f_null = ml_discrepancy(&sample, &null_implied)?;
    let chi_square_null = (n as f64 - 1.0) * f_null;
    let df_null = (p * (p - 1) / 2) as i64;

    let excess = (chi_square - df as f64).max(0.0);
    let excess_null = (chi_square_null - df_null as f64).max(0.0);
    let denom = excess_null.max(excess);
    let cfi = if denom <= 0.0 { 1.0 } else { 1.0 - excess / denom };
    let rmsea = if df <= 0 {
        0.0
    } else {
        (excess / (df as f64 * (n as f64 - 1.0))).sqrt()
    };

    Ok((
        params,
        FitIndices {
            chi_square,
            df,
            chi_square_null,
            df_null,
            cfi,
            rmsea,
        },
    ))
}

/// Single-component starting values from the sample covariance.
fn initial_cfa(
    sample: &DMatrix<f64>,
    structure: &FactorStructure,
    floor: f64,
) -> Result<CfaParams> {
    let p = structure.p();
    let q = structure.q();
    let mut loadings = DMatrix::zeros(p, q);
    for k in 0..q {
        let items: Vec<usize> = (0..p).filter(|&j| structure.is_free(j, k)).collect();
        let m = items.len();
        if m == 1 {
            loadings[(items[0], k)] = (0.5 * sample[(items[0], items[0])]).max(floor).sqrt();
            continue;
        }
        let sub = DMatrix::from_fn(m, m, |r, c| sample[(items[r], items[c])]);
        let (vals, vecs) = crate::linalg::top_eigenpairs(&sub, 1);
        let scale = vals[0].max(1e-8).sqrt();
        let flip = if vecs.column(0).sum() < 0.0 { -1.0 } else { 1.0 };
        for (r, &j) in items.iter().enumerate() {
            loadings[(j, k)] = flip * scale * vecs[(r, 0)];
        }
    }
    let mut uniq = DVector::zeros(p);
    for j in 0..p {
        let comm: f64 = (0..q).map(|k| loadings[(j, k)] * loadings[(j, k)]).sum();
        uniq[j] = (sample[(j, j)] - comm).max(0.1 * sample[(j, j)]).max(floor);
    }
    Ok(CfaParams {
        loadings,
        factor_corr: DMatrix::identity(q, q),
        uniquenesses: uniq,
        factor_means: DVector::zeros(q),
        means_fixed_zero: true,
    })
}

/// Conditional factor moments for the single-component fit (all
/// responsibilities one).
fn cfa_conditional_moments(
    data: &Dataset,
    params: &CfaParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let cov = params.implied_cov();
    let chol = SpdChol::factor(&cov)?;
    let lam_phi = &params.loadings * &params.factor_corr;
    let gain = chol.solve_mat(&lam_phi).transpose(); // q x p
    let mut cond_cov = &params.factor_corr - &gain * &lam_phi;
    symmetrize(&mut cond_cov);
    let n = data.n();
    let q = params.q();
    let mut cond_means = DMatrix::zeros(n, q);
    for i in 0..n {
        let m = &gain * data.row(i);
        cond_means.set_row(i, &m.transpose());
    }
    Ok((cond_means, cond_cov))
}

/// Pearson correlation matrices of the rows assigned to each component
/// (`1` = CFA first, then `0` = EFA). Each class needs at least 3 rows.
pub fn corr_by_class(
    data: &Dataset,
    assignments: &[u8],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if assignments.len() != data.n() {
        return Err(Error::DimensionMismatch("assignment length".into()));
    }
    let idx1: Vec<usize> = (0..data.n()).filter(|&i| assignments[i] == 1).collect();
    let idx0: Vec<usize> = (0..data.n()).filter(|&i| assignments[i] == 0).collect();
    for (class, idx) in [(1u8, &idx1), (0u8, &idx0)] {
        if idx.len() < 3 {
            return Err(Error::ClassTooSmall {
                class,
                rows: idx.len(),
                min: 3,
            });
        }
    }
    Ok((
        correlation_of_rows(data, &idx1),
        correlation_of_rows(data, &idx0),
    ))
}

/// Pearson correlation matrix of the selected rows: exact unit diagonal,
/// exact symmetry; zero-variance columns correlate as zero.
pub fn correlation_of_rows(data: &Dataset, idx: &[usize]) -> DMatrix<f64> {
    let p = data.p();
    let m = idx.len() as f64;
    let mut mean = DVector::zeros(p);
    for &i in idx {
        mean += data.row(i);
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    for &i in idx {
        let d = data.row(i) - &mean;
        cov += &d * d.transpose();
    }
    cov /= m;
    let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let mut corr = DMatrix::zeros(p, p);
    for a in 0..p {
        corr[(a, a)] = 1.0;
        for b in 0..a {
            let denom = sd[a] * sd[b];
            let r = if denom > 0.0 { cov[(a, b)] / denom } else { 0.0 };
            corr[(a, b)] = r;
            corr[(b, a)] = r;
        }
    }
    corr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_cfa_block, Study1Config};
    use crate::rng::stream_rng;
    use nalgebra::DVector;

    fn well_specified_data(n: usize, seed: u64) -> (Dataset, FactorStructure) {
        let cfg = Study1Config {
            n,
            p: 9,
            q: 3,
            ..Study1Config::default()
        };
        let structure = FactorStructure::simple(cfg.p, cfg.q).unwrap();
        let mut rng = stream_rng(seed, &[31]);
        // Draw moderate loadings so communalities stay healthy.
        use rand::Rng;
        let mut loadings = DMatrix::zeros(cfg.p, cfg.q);
        for j in 0..cfg.p {
            for &k in &structure.free_cols(j) {
                loadings[(j, k)] = rng.random_range(0.5..0.9);
            }
        }
        let cfa = CfaParams {
            loadings,
            factor_corr: crate::sim::sample_lkj(cfg.q, 4.0, &mut rng).unwrap(),
            uniquenesses: DVector::from_fn(cfg.p, |_, _| rng.random_range(0.3..0.6)),
            factor_means: DVector::zeros(cfg.q),
            means_fixed_zero: true,
        };
        let rows = gen_cfa_block(&cfa, n, &mut rng).unwrap();
        (Dataset::intercept_only(rows, None).unwrap(), structure)
    }

    #[test]
    fn well_specified_model_fits_cleanly() {
        let (data, structure) = well_specified_data(5000, 1);
        let (params, fit) = fit_cfa_single(&data, &structure, &EmOptions::default()).unwrap();
        assert!(fit.cfi > 0.98, "cfi = {}", fit.cfi);
        assert!(fit.rmsea < 0.03, "rmsea = {}", fit.rmsea);
        assert!(fit.chi_square >= 0.0);
        assert_eq!(fit.df, 9 * 10 / 2 - (9 + 9 + 3));
        assert!(params.uniquenesses.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn discrepancy_zero_iff_exact_fit() {
        let (data, structure) = well_specified_data(400, 2);
        let (params, _) = fit_cfa_single(&data, &structure, &EmOptions::default()).unwrap();
        let implied = crate::model::assemble_cfa_cov(&params).unwrap();
        assert_eq!(ml_discrepancy(&implied, &implied).unwrap(), 0.0);
        // F >= 0 for arbitrary SPD pairs.
        let other = DMatrix::identity(9, 9);
        assert!(ml_discrepancy(&implied, &other).unwrap() >= 0.0);
    }

    #[test]
    fn cfi_invariant_to_item_relabeling_and_rmsea_scale_free() {
        let (data, structure) = well_specified_data(800, 3);
        let (_, base) = fit_cfa_single(&data, &structure, &EmOptions::default()).unwrap();

        // Reverse the item order together with the pattern rows.
        let p = data.p();
        let mut rev = data.responses.clone();
        for j in 0..p {
            rev.set_column(j, &data.responses.column(p - 1 - j));
        }
        let pattern = structure.pattern_row_major();
        let mut rev_pattern = vec![0u8; pattern.len()];
        let q = structure.q();
        for j in 0..p {
            for k in 0..q {
                rev_pattern[j * q + k] = pattern[(p - 1 - j) * q + k];
            }
        }
        let rev_structure = FactorStructure::new(p, q, &rev_pattern).unwrap();
        let rev_data = Dataset::intercept_only(rev, None).unwrap();
        let (_, relabeled) = fit_cfa_single(&rev_data, &rev_structure, &EmOptions::default()).unwrap();
        assert!((base.cfi - relabeled.cfi).abs() < 1e-6);

        // Multiplying all responses by a positive constant leaves both
        // indices unchanged (refit equality within 1e-6).
        let scaled_data = Dataset::intercept_only(&data.responses * 3.0, None).unwrap();
        let (_, scaled) = fit_cfa_single(&scaled_data, &structure, &EmOptions::default()).unwrap();
        assert!((base.cfi - scaled.cfi).abs() < 1e-6);
        assert!((base.rmsea - scaled.rmsea).abs() < 1e-6);
    }

    #[test]
    fn corr_by_class_basics() {
        let mut rng = stream_rng(4, &[32]);
        use rand::Rng;
        let n = 100_000;
        let mut rows = DMatrix::zeros(n, 3);
        for i in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            rows[(i, 0)] = a;
            rows[(i, 1)] = a; // duplicated column
            rows[(i, 2)] = rng.random_range(-1.0..1.0); // independent
        }
        let data = Dataset::intercept_only(rows, None).unwrap();
        let assignments: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let (c1, c0) = corr_by_class(&data, &assignments).unwrap();
        for c in [&c1, &c0] {
            assert_eq!(c[(0, 0)], 1.0);
            assert!((c[(0, 1)] - 1.0).abs() < 1e-12, "duplicated pair");
            assert!(c[(0, 2)].abs() < 0.02, "independent pair");
            assert_eq!(c[(0, 2)], c[(2, 0)]);
        }
    }

    #[test]
    fn single_class_matches_full_sample_matrix() {
        let (data, _) = well_specified_data(200, 5);
        let all: Vec<usize> = (0..data.n()).collect();
        let full = correlation_of_rows(&data, &all);
        let assignments = vec![1u8; data.n()];
        match corr_by_class(&data, &assignments) {
            Err(Error::ClassTooSmall { class, .. }) => assert_eq!(class, 0),
            other => panic!("expected class-too-small, got {:?}", other.map(|_| ())),
        }
        // With a 3-row minority class the majority matrix is well-defined.
        let mut assignments = vec![1u8; data.n()];
        assignments[0] = 0;
        assignments[1] = 0;
        assignments[2] = 0;
        let (c1, _) = corr_by_class(&data, &assignments).unwrap();
        let idx: Vec<usize> = (3..data.n()).collect();
        assert_eq!(c1, correlation_of_rows(&data, &idx));
        let _ = full;
    }
}
