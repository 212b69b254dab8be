//! Classification and parameter-recovery scoring.
//!
//! The positive class is the aberrant (EFA, `z = 0`) component: a true
//! positive is a correctly detected biased respondent.

use serde::{Deserialize, Serialize};

use crate::em::align_cfa_signs;
use crate::error::{Error, Result};
use crate::model::{logistic, CfaParams, FactorStructure};

/// Confusion-matrix counts with the aberrant component as positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Sensitivity, specificity, balanced accuracy, and Matthews correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub se: f64,
    pub sp: f64,
    pub bacc: f64,
    pub mcc: f64,
}

impl ClassMetrics {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let se = ratio(c.tp, c.tp + c.fn_);
        let sp = ratio(c.tn, c.tn + c.fp);
        let denom = ((c.tp + c.fp) as f64
            * (c.tp + c.fn_) as f64
            * (c.tn + c.fp) as f64
            * (c.tn + c.fn_) as f64)
            .sqrt();
        let mcc = if denom == 0.0 {
            0.0
        } else {
            (c.tp as f64 * c.tn as f64 - c.fp as f64 * c.fn_ as f64) / denom
        };
        Self {
            se,
            sp,
            bacc: (se + sp) / 2.0,
            mcc,
        }
    }
}

/// Score hard assignments against the true component labels (`1` = CFA).
///
/// Panics if the two vectors differ in length.
pub fn score_classification(truth: &[u8], predicted: &[u8]) -> (ConfusionCounts, ClassMetrics) {
    assert_eq!(truth.len(), predicted.len(), "label vectors must align");
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&z, &zhat) in truth.iter().zip(predicted) {
        let truly_aberrant = z == 0;
        let flagged = zhat == 0;
        match (truly_aberrant, flagged) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let metrics = ClassMetrics::from_counts(&c);
    (c, metrics)
}

/// Bias and root-mean-square error of one parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecovery {
    pub bias: f64,
    pub rmse: f64,
}

fn block(diffs: &[f64]) -> BlockRecovery {
    if diffs.is_empty() {
        return BlockRecovery { bias: 0.0, rmse: 0.0 };
    }
    let n = diffs.len() as f64;
    let bias = diffs.iter().sum::<f64>() / n;
    let rmse = (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    BlockRecovery { bias, rmse }
}

/// Per-block recovery of the CFA parameters and the mixture proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Free loadings only.
    pub lambda: BlockRecovery,
    pub theta_delta: BlockRecovery,
    /// Off-diagonal factor correlations.
    pub phi: BlockRecovery,
    pub mu: BlockRecovery,
    /// Intercept-implied mixture proportion.
    pub pi: BlockRecovery,
}

/// Compare an estimated CFA block against the generating one, after aligning
/// the estimated factor columns to the truth by the bootstrap sign rule.
/// The mixture proportion enters through the intercepts:
/// `pi = logistic(beta_0)` on each side.
pub fn score_recovery(
    truth: &CfaParams,
    estimate: &CfaParams,
    structure: &FactorStructure,
    true_beta0: f64,
    est_beta0: f64,
) -> Result<RecoveryReport> {
    if truth.p() != estimate.p() || truth.q() != estimate.q() {
        return Err(Error::DimensionMismatch(
            "recovery comparison needs matching CFA dimensions".into(),
        ));
    }
    let mut est = estimate.clone();
    align_cfa_signs(truth, &mut est);

    let mut lambda_diffs = Vec::new();
    for j in 0..truth.p() {
        for k in 0..truth.q() {
            if structure.is_free(j, k) {
                lambda_diffs.push(est.loadings[(j, k)] - truth.loadings[(j, k)]);
            }
        }
    }
    let theta_diffs: Vec<f64> = (0..truth.p())
        .map(|j| est.uniquenesses[j] - truth.uniquenesses[j])
        .collect();
    let mut phi_diffs = Vec::new();
    for r in 1..truth.q() {
        for c in 0..r {
            phi_diffs.push(est.factor_corr[(r, c)] - truth.factor_corr[(r, c)]);
        }
    }
    let mu_diffs: Vec<f64> = (0..truth.q())
        .map(|k| est.factor_means[k] - truth.factor_means[k])
        .collect();
    let pi_diffs = vec![logistic(est_beta0) - logistic(true_beta0)];

    Ok(RecoveryReport {
        lambda: block(&lambda_diffs),
        theta_delta: block(&theta_diffs),
        phi: block(&phi_diffs),
        mu: block(&mu_diffs),
        pi: block(&pi_diffs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn perfect_prediction() {
        let truth = vec![0, 1, 0, 1, 1];
        let (_, m) = score_classification(&truth, &truth);
        assert_eq!((m.se, m.sp, m.bacc, m.mcc), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn balanced_random_guessing() {
        // TP = FP = TN = FN = 5.
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..5 {
            truth.push(0);
            pred.push(0); // tp
            truth.push(1);
            pred.push(0); // fp
            truth.push(1);
            pred.push(1); // tn
            truth.push(0);
            pred.push(1); // fn
        }
        let (c, m) = score_classification(&truth, &pred);
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (5, 5, 5, 5));
        assert_eq!(m.mcc, 0.0);
        assert_eq!(m.bacc, 0.5);
    }

    #[test]
    fn hand_arithmetic_case() {
        // TP=40, FN=10, TN=35, FP=15.
        let c = ConfusionCounts {
            tp: 40,
            fn_: 10,
            tn: 35,
            fp: 15,
        };
        let m = ClassMetrics::from_counts(&c);
        assert_relative_eq!(m.se, 0.8, epsilon = 1e-12);
        assert_relative_eq!(m.sp, 0.7, epsilon = 1e-12);
        assert_relative_eq!(m.bacc, 0.75, epsilon = 1e-12);
        let denom = (55.0f64 * 50.0 * 50.0 * 45.0).sqrt();
        assert_relative_eq!(m.mcc, (1400.0 - 150.0) / denom, epsilon = 1e-12);
        assert!((m.mcc - 0.5025).abs() < 1e-4);
    }

    #[test]
    fn bacc_identity_and_mcc_range_exhaustive_small_grid() {
        for tp in 0..4u64 {
            for fp in 0..4u64 {
                for tn in 0..4u64 {
                    for fn_ in 0..4u64 {
                        let c = ConfusionCounts { tp, fp, tn, fn_ };
                        let m = ClassMetrics::from_counts(&c);
                        assert_eq!(m.bacc, (m.se + m.sp) / 2.0);
                        assert!((-1.0..=1.0).contains(&m.mcc));
                    }
                }
            }
        }
    }

    fn toy_cfa() -> (FactorStructure, CfaParams) {
        let structure = FactorStructure::simple(6, 2).unwrap();
        let mut loadings = DMatrix::zeros(6, 2);
        for j in 0..6 {
            for &k in &structure.free_cols(j) {
                loadings[(j, k)] = 0.5 + 0.05 * j as f64;
            }
        }
        let cfa = CfaParams {
            loadings,
            factor_corr: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
            uniquenesses: DVector::from_element(6, 0.5),
            factor_means: DVector::from_column_slice(&[0.2, -0.1]),
            means_fixed_zero: false,
        };
        (structure, cfa)
    }

    #[test]
    fn exact_estimate_has_zero_recovery_error() {
        let (structure, cfa) = toy_cfa();
        let r = score_recovery(&cfa, &cfa, &structure, 0.4, 0.4).unwrap();
        assert_eq!(r.lambda.bias, 0.0);
        assert_eq!(r.lambda.rmse, 0.0);
        assert_eq!(r.mu.rmse, 0.0);
        assert_eq!(r.pi.bias, 0.0);
    }

    #[test]
    fn constant_loading_shift_shows_up_exactly() {
        let (structure, cfa) = toy_cfa();
        let mut est = cfa.clone();
        for j in 0..6 {
            for k in 0..2 {
                if structure.is_free(j, k) {
                    est.loadings[(j, k)] += 0.1;
                }
            }
        }
        let r = score_recovery(&cfa, &est, &structure, 0.0, 0.0).unwrap();
        assert_relative_eq!(r.lambda.bias, 0.1, epsilon = 1e-12);
        assert_relative_eq!(r.lambda.rmse, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn sign_flipped_estimate_aligns_before_scoring() {
        let (structure, cfa) = toy_cfa();
        let mut est = cfa.clone();
        for j in 0..6 {
            est.loadings[(j, 0)] = -est.loadings[(j, 0)];
        }
        est.factor_corr[(0, 1)] = -est.factor_corr[(0, 1)];
        est.factor_corr[(1, 0)] = -est.factor_corr[(1, 0)];
        est.factor_means[0] = -est.factor_means[0];
        let r = score_recovery(&cfa, &est, &structure, 0.0, 0.0).unwrap();
        assert!(r.lambda.rmse < 1e-12);
        assert!(r.mu.rmse < 1e-12);
        assert!(r.phi.rmse < 1e-12);
    }
}
