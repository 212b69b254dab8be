//! Synthetic-data generation for the two validation studies.
//!
//! Study 1 mixes structured CFA rows with rows from a genuinely different
//! EFA process and varies the mixing proportion, the factor counts, and the
//! number of mixture covariates. Study 2 generates pure CFA rating data,
//! discretizes it onto an `M`-point scale, and corrupts a subsample with the
//! SGR faking-good replacement model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SpdChol;
use crate::model::{
    logistic, CfaParams, Dataset, EfaParams, FactorStructure, MixtureParams, MixtureReg,
};

use super::lkj::sample_lkj;
use super::sgr::{default_thresholds, discretize, perturb_faking};

/// Design cell of the mixture-classification study.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Study1Config {
    pub n: usize,
    pub p: usize,
    /// Expected share of CFA (non-aberrant) rows at the intercept.
    pub pi: f64,
    /// CFA factor count of the generating model.
    pub q: usize,
    /// EFA factor count of the generating model.
    pub k: usize,
    /// Number of mixture covariates (0, 1 = Bernoulli, 2 = + uniform).
    pub c: usize,
    pub seed: u64,
}

impl Default for Study1Config {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 30,
            pi: 0.8,
            q: 3,
            k: 2,
            c: 1,
            seed: 0,
        }
    }
}

impl Study1Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidParameter("pi must lie in (0, 1)".into()));
        }
        if self.q >= self.p || self.k >= self.p || self.q == 0 || self.k == 0 {
            return Err(Error::InvalidParameter(
                "factor counts must satisfy 0 < q, K < p".into(),
            ));
        }
        if self.c > 2 {
            return Err(Error::InvalidParameter(
                "study 1 supports at most 2 covariates".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "study1/pi={}/q={}/K={}/C={}/n={}/p={}",
            self.pi, self.q, self.k, self.c, self.n, self.p
        )
    }
}

/// Design cell of the faking-perturbation study.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Study2Config {
    pub n: usize,
    pub p: usize,
    /// Expected share of honest (unperturbed) rows.
    pub pi: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Faking-good probability of the replacement model.
    pub kappa: f64,
    /// Rating-scale size.
    pub m: usize,
    /// CFA factor count of the generating (and fitted) model.
    pub q: usize,
    /// EFA factor count used when fitting.
    pub k_fit: usize,
    /// Interior cut points; empty means standard-normal quantiles.
    pub thresholds: Vec<f64>,
    pub seed: u64,
}

impl Default for Study2Config {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 16,
            pi: 0.8,
            gamma: 4.0,
            delta: 1.5,
            kappa: 1.0,
            m: 11,
            q: 4,
            k_fit: 1,
            thresholds: Vec::new(),
            seed: 0,
        }
    }
}

impl Study2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidParameter("pi must lie in (0, 1)".into()));
        }
        if !(self.gamma > 0.0 && self.delta > 0.0) {
            return Err(Error::InvalidParameter("gamma and delta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter("kappa must lie in [0, 1]".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter("M must be at least 2".into()));
        }
        if self.q >= self.p || self.q == 0 || self.k_fit == 0 || self.k_fit >= self.p {
            return Err(Error::InvalidParameter(
                "factor counts must satisfy 0 < q, K < p".into(),
            ));
        }
        if !self.thresholds.is_empty() && self.thresholds.len() != self.m - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds supplied for M = {}",
                self.thresholds.len(),
                self.m
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let style = if self.gamma > self.delta { "extreme" } else { "slight" };
        format!(
            "study2/{style}/pi={}/p={}/n={}/gamma={}/delta={}",
            self.pi, self.p, self.n, self.gamma, self.delta
        )
    }

    pub fn effective_thresholds(&self) -> Vec<f64> {
        if self.thresholds.is_empty() {
            default_thresholds(self.m)
        } else {
            self.thresholds.clone()
        }
    }
}

/// Sample `m` rows `y = loadings * eta + noise` with
/// `eta ~ N(means, factor_corr)` and independent Gaussian noise with the
/// given uniquenesses.
pub fn gen_cfa_block<R: Rng + ?Sized>(
    params: &CfaParams,
    m: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = params.p();
    let q = params.q();
    let chol = SpdChol::factor(&params.factor_corr)?;
    let noise_sd: Vec<f64> = params.uniquenesses.iter().map(|&t| t.sqrt()).collect();
    let mut out = DMatrix::zeros(m, p);
    for i in 0..m {
        let z = DVector::from_fn(q, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        let eta = &params.factor_means + chol.l() * z;
        for j in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            let mut v = noise_sd[j] * e;
            for k in 0..q {
                v += params.loadings[(j, k)] * eta[k];
            }
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Sample `r` rows from the EFA component: `y = loadings * xi + noise` with
/// `xi ~ N(means, I)`.
pub fn gen_efa_block<R: Rng + ?Sized>(
    params: &EfaParams,
    r: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = params.p();
    let k = params.k();
    let noise_sd: Vec<f64> = params.uniquenesses.iter().map(|&t| t.sqrt()).collect();
    let mut out = DMatrix::zeros(r, p);
    for i in 0..r {
        let xi = DVector::from_fn(k, |c, _| {
            let v: f64 = StandardNormal.sample(rng);
            params.factor_means[c] + v
        });
        for j in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            let mut v = noise_sd[j] * e;
            for c in 0..k {
                v += params.loadings[(j, c)] * xi[c];
            }
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Free CFA loadings from `U(0.05, 0.99)` on the pattern, with per-item
/// redraws (bounded) whenever `1 - diag(L Phi Lᵀ)` would not be positive.
fn draw_cfa_truth<R: Rng + ?Sized>(
    structure: &FactorStructure,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let p = structure.p();
    let q = structure.q();
    let mut loadings = DMatrix::zeros(p, q);
    for j in 0..p {
        for &k in &structure.free_cols(j) {
            loadings[(j, k)] = rng.random_range(0.05..=0.99);
        }
    }
    let phi = sample_lkj(q, 1.0, rng)?;
    let mut uniquenesses = DVector::zeros(p);
    for j in 0..p {
        let mut tries = 0;
        loop {
            let row = loadings.row(j).transpose();
            let communality = (&phi * &row).dot(&row);
            let theta = 1.0 - communality;
            if theta > 0.0 {
                uniquenesses[j] = theta;
                break;
            }
            tries += 1;
            if tries > 100 {
                return Err(Error::Degenerate(format!(
                    "could not draw a positive uniqueness for item {} in 100 tries",
                    j + 1
                )));
            }
            for &k in &structure.free_cols(j) {
                loadings[(j, k)] = rng.random_range(0.05..=0.99);
            }
        }
    }
    Ok((loadings, phi, uniquenesses))
}

/// Generating truth of a study-1 replication.
#[derive(Debug, Clone)]
pub struct Study1Truth {
    pub structure: FactorStructure,
    pub params: MixtureParams,
}

/// Draw one study-1 dataset: true parameters, covariates, per-row mixture
/// indicators, then CFA rows where `z = 1` and EFA rows where `z = 0`.
pub fn gen_study1<R: Rng + ?Sized>(
    cfg: &Study1Config,
    rng: &mut R,
) -> Result<(Dataset, Study1Truth)> {
    cfg.validate()?;
    let structure = FactorStructure::simple(cfg.p, cfg.q)?;
    let (loadings, phi, uniquenesses) = draw_cfa_truth(&structure, rng)?;
    let cfa = CfaParams {
        loadings,
        factor_corr: phi,
        uniquenesses,
        factor_means: DVector::zeros(cfg.q),
        means_fixed_zero: true,
    };
    let efa = EfaParams {
        loadings: DMatrix::from_fn(cfg.p, cfg.k, |_, _| rng.random_range(0.05..=0.99)),
        uniquenesses: DVector::from_element(cfg.p, 0.85),
        factor_means: DVector::from_fn(cfg.k, |_, _| rng.random_range(0.5..=5.0)),
    };
    let mut beta = DVector::zeros(cfg.c + 1);
    beta[0] = (cfg.pi / (1.0 - cfg.pi)).ln();
    for c in 1..=cfg.c {
        beta[c] = rng.random_range(-1.5..=1.5);
    }
    let covariate_names: Vec<String> = (1..=cfg.c).map(|c| format!("x{c}")).collect();

    let mut design = DMatrix::from_element(cfg.n, cfg.c + 1, 1.0);
    if cfg.c >= 1 {
        for i in 0..cfg.n {
            design[(i, 1)] = f64::from(rng.random_bool(0.5));
        }
    }
    if cfg.c >= 2 {
        for i in 0..cfg.n {
            design[(i, 2)] = rng.random_range(-5.0..=5.0);
        }
    }

    let predictor = &design * &beta;
    let truth_z: Vec<u8> = (0..cfg.n)
        .map(|i| u8::from(rng.random_bool(logistic(predictor[i]))))
        .collect();
    let n_cfa = truth_z.iter().filter(|&&z| z == 1).count();

    let cfa_rows = gen_cfa_block(&cfa, n_cfa, rng)?;
    let efa_rows = gen_efa_block(&efa, cfg.n - n_cfa, rng)?;
    let mut responses = DMatrix::zeros(cfg.n, cfg.p);
    let (mut next_cfa, mut next_efa) = (0usize, 0usize);
    for (i, &z) in truth_z.iter().enumerate() {
        if z == 1 {
            responses.set_row(i, &cfa_rows.row(next_cfa));
            next_cfa += 1;
        } else {
            responses.set_row(i, &efa_rows.row(next_efa));
            next_efa += 1;
        }
    }

    let reg = MixtureReg {
        beta,
        covariate_names: covariate_names.clone(),
    };
    let params = MixtureParams { cfa, efa, reg };
    let data = Dataset::new(
        responses,
        design,
        Some(truth_z),
        None,
        covariate_names,
    )?;
    Ok((data, Study1Truth { structure, params }))
}

/// Generating truth of a study-2 replication, including the discretized
/// matrix before perturbation for auditing the faking damage.
#[derive(Debug, Clone)]
pub struct Study2Truth {
    pub structure: FactorStructure,
    pub cfa: CfaParams,
    pub pi: f64,
    pub thresholds: Vec<f64>,
    /// The discrete responses before the faking perturbation.
    pub unperturbed: DMatrix<f64>,
}

/// Draw one study-2 dataset: CFA truth, continuous responses, `M`-point
/// discretization, Bernoulli faking subsample, SGR perturbation, stacked
/// discrete matrix (returned as real values, ready for fitting).
pub fn gen_study2<R: Rng + ?Sized>(
    cfg: &Study2Config,
    rng: &mut R,
) -> Result<(Dataset, Study2Truth)> {
    cfg.validate()?;
    let structure = FactorStructure::simple(cfg.p, cfg.q)?;
    let (loadings, phi, uniquenesses) = draw_cfa_truth(&structure, rng)?;
    let cfa = CfaParams {
        loadings,
        factor_corr: phi,
        uniquenesses,
        factor_means: DVector::zeros(cfg.q),
        means_fixed_zero: true,
    };

    let continuous = gen_cfa_block(&cfa, cfg.n, rng)?;
    let thresholds = cfg.effective_thresholds();
    let discrete = discretize(&continuous, &thresholds)?;

    let truth_z: Vec<u8> = (0..cfg.n)
        .map(|_| u8::from(rng.random_bool(cfg.pi)))
        .collect();
    let faking_rows: Vec<usize> = truth_z
        .iter()
        .enumerate()
        .filter_map(|(i, &z)| (z == 0).then_some(i))
        .collect();
    let responses = perturb_faking(
        &discrete,
        &faking_rows,
        cfg.m,
        cfg.gamma,
        cfg.delta,
        cfg.kappa,
        rng,
    )?;

    let data = Dataset::intercept_only(responses, Some(truth_z))?;
    Ok((
        data,
        Study2Truth {
            structure,
            cfa,
            pi: cfg.pi,
            thresholds,
            unperturbed: discrete,
        },
    ))
}
