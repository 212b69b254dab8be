//! Starting values for the EM chains.
//!
//! Strategy, per start: split the rows into two groups by a short k-means
//! iteration with seeded centroids; decide which group the structured model
//! explains better (jointly with how well a truncated eigenfit explains the
//! other) and make it the CFA group; build CFA starting values by structured
//! least squares on that group's covariance and EFA values from a truncated
//! eigendecomposition of the other group's uncentered second moment (so a
//! mean shift lands in the loading space); set the mixture intercept to the
//! log-odds of the CFA group share. Starts beyond the first additionally
//! jitter the loadings.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::linalg::{top_eigenpairs, SpdChol};
use crate::model::{CfaParams, Dataset, EfaParams, FactorStructure, MixtureParams, MixtureReg};
use crate::rng::{stream_rng, tag};

use super::ModelSpec;

const KMEANS_ITERS: usize = 20;
pub(crate) const JITTER_SD: f64 = 0.05;

/// Deterministic starting values for `(data, spec, seed)`; the same seed
/// yields bit-identical output. This is the base (start-0) initialization;
/// the fit driver derives further starts with their own streams and jitter.
pub fn initialize(data: &Dataset, spec: &ModelSpec, seed: u64) -> Result<MixtureParams> {
    let mut rng = stream_rng(seed, &[tag::FIT]);
    initialize_with_rng(data, spec, &mut rng)
}

pub(crate) fn initialize_with_rng(
    data: &Dataset,
    spec: &ModelSpec,
    rng: &mut ChaCha8Rng,
) -> Result<MixtureParams> {
    let labels = two_means_partition(&data.responses, rng);
    let group_a: Vec<usize> = (0..data.n()).filter(|&i| labels[i]).collect();
    let group_b: Vec<usize> = (0..data.n()).filter(|&i| !labels[i]).collect();

    let moments_a = GroupMoments::of(data, &group_a);
    let moments_b = GroupMoments::of(data, &group_b);

    // Joint assignment rule: the labeling minimizing structured-residual on
    // the CFA side plus eigenfit residual on the EFA side.
    let cfa_a = structured_ls(&moments_a.cov, &spec.structure);
    let cfa_b = structured_ls(&moments_b.cov, &spec.structure);
    let efa_a = efa_ls(&moments_a, spec.n_efa_factors);
    let efa_b = efa_ls(&moments_b, spec.n_efa_factors);
    let score_a_cfa = cfa_a.residual + efa_b.residual;
    let score_b_cfa = cfa_b.residual + efa_a.residual;
    let (cfa_fit, cfa_moments, cfa_count, efa_fit) = if score_a_cfa <= score_b_cfa {
        (cfa_a, &moments_a, group_a.len(), efa_b)
    } else {
        (cfa_b, &moments_b, group_b.len(), efa_a)
    };

    let q = spec.structure.q();
    let factor_means = if spec.means_fixed_zero {
        DVector::zeros(q)
    } else {
        ls_factor_means(&cfa_fit.loadings, &cfa_moments.mean)
    };
    let cfa = CfaParams {
        loadings: cfa_fit.loadings,
        factor_corr: DMatrix::identity(q, q),
        uniquenesses: cfa_fit.uniquenesses,
        factor_means,
        means_fixed_zero: spec.means_fixed_zero,
    };
    let efa = EfaParams {
        loadings: efa_fit.loadings,
        uniquenesses: efa_fit.uniquenesses,
        factor_means: efa_fit.factor_means,
    };

    let n = data.n() as f64;
    let share = (cfa_count as f64).clamp(1.0, n - 1.0) / n;
    let mut beta = DVector::zeros(data.design.ncols());
    beta[0] = (share / (1.0 - share)).ln();
    let reg = MixtureReg {
        beta,
        covariate_names: data.covariate_names.clone(),
    };

    Ok(MixtureParams { cfa, efa, reg })
}

/// Add `N(0, sd^2)` jitter to the free CFA loadings and all EFA loadings.
pub(crate) fn jitter_loadings(
    params: &mut MixtureParams,
    structure: &FactorStructure,
    rng: &mut ChaCha8Rng,
    sd: f64,
) {
    let normal = Normal::new(0.0, sd).expect("valid jitter sd");
    for j in 0..params.cfa.p() {
        for k in 0..params.cfa.q() {
            if structure.is_free(j, k) {
                params.cfa.loadings[(j, k)] += normal.sample(rng);
            }
        }
    }
    for j in 0..params.efa.p() {
        for k in 0..params.efa.k() {
            params.efa.loadings[(j, k)] += normal.sample(rng);
        }
    }
}

/// Two-group Lloyd iteration on the raw rows: seeded centroids, fixed
/// iteration count, nearest-centroid ties to the first group. Returns
/// per-row membership of group A.
fn two_means_partition(rows: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = rows.nrows();
    if n == 1 {
        return vec![true];
    }
    let first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let mut c_a = rows.row(first).clone_owned();
    let mut c_b = rows.row(second).clone_owned();
    let mut labels = vec![true; n];
    for _ in 0..KMEANS_ITERS {
        for i in 0..n {
            let da = (rows.row(i) - &c_a).norm_squared();
            let db = (rows.row(i) - &c_b).norm_squared();
            labels[i] = da <= db;
        }
        // Keep both clusters alive: move the row farthest from the survivor.
        let all_a = labels.iter().all(|&l| l);
        if all_a || labels.iter().all(|&l| !l) {
            let centroid = if all_a { &c_a } else { &c_b };
            let far = (0..n)
                .max_by(|&i, &j| {
                    let di = (rows.row(i) - centroid).norm_squared();
                    let dj = (rows.row(j) - centroid).norm_squared();
                    di.partial_cmp(&dj).unwrap()
                })
                .unwrap();
            labels[far] = !all_a;
        }
        let mut sum_a = DVector::zeros(rows.ncols());
        let mut sum_b = DVector::zeros(rows.ncols());
        let (mut n_a, mut n_b) = (0usize, 0usize);
        for i in 0..n {
            if labels[i] {
                sum_a += rows.row(i).transpose();
                n_a += 1;
            } else {
                sum_b += rows.row(i).transpose();
                n_b += 1;
            }
        }
        c_a = (sum_a / n_a as f64).transpose();
        c_b = (sum_b / n_b as f64).transpose();
    }
    labels
}

/// Mean, centered covariance, and uncentered second moment of a row group
/// (ML divisors), ridged when the group is too small for full rank.
struct GroupMoments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    second: DMatrix<f64>,
}

impl GroupMoments {
    fn of(data: &Dataset, idx: &[usize]) -> Self {
        let p = data.p();
        if idx.len() < 2 {
            // Degenerate split: fall back to full-sample moments.
            let all: Vec<usize> = (0..data.n()).collect();
            return Self::of(data, &all);
        }
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
        if idx.len() <= p {
            log::warn!(
                "covariance rank-deficient: group of {} rows for {} items; ridging",
                idx.len(),
                p
            );
            let ridge = 1e-3 * cov.trace().max(1e-6) / p as f64;
            for j in 0..p {
                cov[(j, j)] += ridge;
            }
        }
        let second = &cov + &mean * mean.transpose();
        Self { mean, cov, second }
    }
}

struct StructuredFit {
    loadings: DMatrix<f64>,
    uniquenesses: DVector<f64>,
    residual: f64,
}

/// Rank-one least-squares fit per factor block of the pattern: the leading
/// eigenpair of each factor's item subblock supplies its free loadings.
fn structured_ls(cov: &DMatrix<f64>, structure: &FactorStructure) -> StructuredFit {
    let p = structure.p();
    let q = structure.q();
    let mut loadings = DMatrix::zeros(p, q);
    for k in 0..q {
        let items: Vec<usize> = (0..p).filter(|&j| structure.is_free(j, k)).collect();
        if items.len() == 1 {
            let j = items[0];
            loadings[(j, k)] = (0.5 * cov[(j, j)]).max(1e-4).sqrt();
            continue;
        }
        let m = items.len();
        let sub = DMatrix::from_fn(m, m, |r, c| cov[(items[r], items[c])]);
        let (vals, vecs) = top_eigenpairs(&sub, 1);
        let scale = vals[0].max(1e-8).sqrt();
        let flip = if vecs.column(0).sum() < 0.0 { -1.0 } else { 1.0 };
        for (r, &j) in items.iter().enumerate() {
            loadings[(j, k)] = flip * scale * vecs[(r, 0)];
        }
    }
    let mut uniquenesses = DVector::zeros(p);
    for j in 0..p {
        let communality: f64 = (0..q).map(|k| loadings[(j, k)] * loadings[(j, k)]).sum();
        uniquenesses[j] = (cov[(j, j)] - communality)
            .max(0.05 * cov[(j, j)])
            .max(1e-4);
    }
    let implied = &loadings * loadings.transpose() + DMatrix::from_diagonal(&uniquenesses);
    let residual = (cov - implied).norm() / cov.norm().max(1e-12);
    StructuredFit {
        loadings,
        uniquenesses,
        residual,
    }
}

struct EfaFit {
    loadings: DMatrix<f64>,
    uniquenesses: DVector<f64>,
    factor_means: DVector<f64>,
    residual: f64,
}

/// Truncated eigendecomposition of the group's uncentered second moment: a
/// mean shift shows up as a dominant eigendirection, so the implied mean
/// `loadings * factor_means` can reach it. Uniquenesses come from the
/// centered covariance.
fn efa_ls(moments: &GroupMoments, k: usize) -> EfaFit {
    let p = moments.second.nrows();
    let (vals, vecs) = top_eigenpairs(&moments.second, k);
    let eig_all = nalgebra::SymmetricEigen::new(moments.second.clone()).eigenvalues;
    let trailing: f64 = {
        let mut sorted: Vec<f64> = eig_all.iter().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if p > k {
            sorted[k..].iter().sum::<f64>() / (p - k) as f64
        } else {
            0.0
        }
    };
    let mut loadings = DMatrix::zeros(p, k);
    for c in 0..k {
        let mag = (vals[c] - trailing).max(1e-4).sqrt();
        let flip = if vecs.column(c).sum() < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            loadings[(j, c)] = flip * mag * vecs[(j, c)];
        }
    }
    let factor_means = ls_factor_means(&loadings, &moments.mean);
    let mut uniquenesses = DVector::zeros(p);
    for j in 0..p {
        let mut centered_implied = 0.0;
        for c in 0..k {
            centered_implied += loadings[(j, c)] * loadings[(j, c)];
        }
        let mean_part = {
            let mut v = 0.0;
            for c in 0..k {
                v += loadings[(j, c)] * factor_means[c];
            }
            v * v
        };
        centered_implied -= mean_part;
        uniquenesses[j] = (moments.cov[(j, j)] - centered_implied)
            .max(0.05 * moments.cov[(j, j)])
            .max(1e-4);
    }
    let implied = &loadings * loadings.transpose() + DMatrix::from_diagonal(&uniquenesses);
    let residual = (&moments.second - implied).norm() / moments.second.norm().max(1e-12);
    EfaFit {
        loadings,
        uniquenesses,
        factor_means,
        residual,
    }
}

/// Ridge least squares of a mean vector on the loadings:
/// `(L^T L + 1e-8 I)^{-1} L^T m`.
fn ls_factor_means(loadings: &DMatrix<f64>, mean: &DVector<f64>) -> DVector<f64> {
    let k = loadings.ncols();
    let mut gram = loadings.transpose() * loadings;
    for c in 0..k {
        gram[(c, c)] += 1e-8;
    }
    match SpdChol::factor(&gram) {
        Ok(ch) => ch.solve_vec(&(loadings.transpose() * mean)),
        Err(_) => DVector::zeros(k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::posterior_probs;
    use rand_distr::StandardNormal;

    fn clustered_data(n: usize, p: usize, seed: u64) -> (Dataset, Vec<bool>) {
        // Group A: one-factor structured rows around zero.
        // Group B: shifted noisy rows far away.
        let mut rng = stream_rng(seed, &[9]);
        let mut rows = DMatrix::zeros(n, p);
        let mut in_a = vec![false; n];
        for i in 0..n {
            let a = i % 2 == 0;
            in_a[i] = a;
            let f: f64 = StandardNormal.sample(&mut rng);
            for j in 0..p {
                let noise: f64 = StandardNormal.sample(&mut rng);
                rows[(i, j)] = if a { 0.8 * f + 0.5 * noise } else { 6.0 + noise };
            }
        }
        (Dataset::intercept_only(rows, None).unwrap(), in_a)
    }

    #[test]
    fn initial_responsibilities_agree_with_partition() {
        let (data, in_a) = clustered_data(120, 6, 77);
        let spec = ModelSpec::new(FactorStructure::simple(6, 1).unwrap(), 1, false);
        let params = initialize(&data, &spec, 123).unwrap();
        let resp = posterior_probs(&data, &params).unwrap();
        // Count agreement with the generating split, up to label swap.
        let mut agree = 0usize;
        for i in 0..data.n() {
            let cfa_side = resp[(i, 0)] >= 0.5;
            if cfa_side == in_a[i] {
                agree += 1;
            }
        }
        let frac = agree.max(data.n() - agree) as f64 / data.n() as f64;
        assert!(frac >= 0.9, "partition agreement {frac}");
    }

    #[test]
    fn same_seed_bit_identical() {
        let (data, _) = clustered_data(60, 5, 88);
        let spec = ModelSpec::new(FactorStructure::simple(5, 1).unwrap(), 2, false);
        let a = initialize(&data, &spec, 9).unwrap();
        let b = initialize(&data, &spec, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jitter_only_touches_loadings() {
        let (data, _) = clustered_data(60, 5, 99);
        let structure = FactorStructure::simple(5, 1).unwrap();
        let spec = ModelSpec::new(structure.clone(), 1, false);
        let base = initialize(&data, &spec, 4).unwrap();
        let mut jittered = base.clone();
        let mut rng = stream_rng(4, &[tag::EM_START, 1]);
        jitter_loadings(&mut jittered, &structure, &mut rng, JITTER_SD);
        assert_ne!(jittered.cfa.loadings, base.cfa.loadings);
        assert_eq!(jittered.cfa.uniquenesses, base.cfa.uniquenesses);
        assert_eq!(jittered.reg, base.reg);
        // Zero-sd jitter is the identity: starts differ only through it.
        let mut unjittered = base.clone();
        jitter_loadings(&mut unjittered, &structure, &mut rng, 0.0);
        assert_eq!(unjittered, base);
    }

    #[test]
    fn shifted_cluster_lands_in_efa_component() {
        // The CFA group should be the structured one, not the shifted blob.
        let (data, in_a) = clustered_data(200, 6, 101);
        let spec = ModelSpec::new(FactorStructure::simple(6, 1).unwrap(), 1, false);
        let params = initialize(&data, &spec, 7).unwrap();
        let resp = posterior_probs(&data, &params).unwrap();
        let mut cfa_on_a = 0usize;
        let mut count_a = 0usize;
        for i in 0..data.n() {
            if in_a[i] {
                count_a += 1;
                if resp[(i, 0)] >= 0.5 {
                    cfa_on_a += 1;
                }
            }
        }
        assert!(
            cfa_on_a as f64 / count_a as f64 > 0.9,
            "structured group should start in the CFA component"
        );
    }
}
