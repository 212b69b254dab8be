//! JSON wire format for structures and parameter sets.
//!
//! Matrices are row-major flat arrays of IEEE doubles; serialization uses
//! shortest-round-trip decimal (at most 17 significant digits), so values
//! re-parse bit-exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CfaParams, EfaParams, FactorStructure, MixtureParams, MixtureReg};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureDoc {
    pub p: usize,
    pub q: usize,
    /// Row-major 0/1 pattern; 1 marks a free loading.
    pub pattern: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfaDoc {
    /// Row-major `p x q`.
    pub loadings: Vec<f64>,
    /// Row-major `q x q`.
    pub factor_corr: Vec<f64>,
    pub uniquenesses: Vec<f64>,
    pub factor_means: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfaDoc {
    pub k: usize,
    /// Row-major `p x K`.
    pub loadings: Vec<f64>,
    pub uniquenesses: Vec<f64>,
    pub factor_means: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegDoc {
    pub beta: Vec<f64>,
    pub covariate_names: Vec<String>,
}

/// Full parameter document: structure plus the three parameter blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub structure: StructureDoc,
    pub cfa: CfaDoc,
    pub efa: EfaDoc,
    pub reg: RegDoc,
    pub means_fixed_zero: bool,
}

impl From<&FactorStructure> for StructureDoc {
    fn from(s: &FactorStructure) -> Self {
        Self {
            p: s.p(),
            q: s.q(),
            pattern: s.pattern_row_major(),
        }
    }
}

impl StructureDoc {
    pub fn to_structure(&self) -> Result<FactorStructure> {
        FactorStructure::new(self.p, self.q, &self.pattern)
    }
}

impl CfaDoc {
    pub fn from_cfa(cfa: &CfaParams) -> Self {
        Self {
            loadings: mat_to_vec(&cfa.loadings),
            factor_corr: mat_to_vec(&cfa.factor_corr),
            uniquenesses: cfa.uniquenesses.iter().copied().collect(),
            factor_means: cfa.factor_means.iter().copied().collect(),
        }
    }
}

fn mat_to_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn vec_to_mat(v: &[f64], rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} values for a {rows}x{cols} matrix",
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

impl ParamsDoc {
    pub fn from_params(structure: &FactorStructure, params: &MixtureParams) -> Self {
        Self {
            structure: structure.into(),
            cfa: CfaDoc::from_cfa(&params.cfa),
            efa: EfaDoc {
                k: params.efa.k(),
                loadings: mat_to_vec(&params.efa.loadings),
                uniquenesses: params.efa.uniquenesses.iter().copied().collect(),
                factor_means: params.efa.factor_means.iter().copied().collect(),
            },
            reg: RegDoc {
                beta: params.reg.beta.iter().copied().collect(),
                covariate_names: params.reg.covariate_names.clone(),
            },
            means_fixed_zero: params.cfa.means_fixed_zero,
        }
    }

    /// Rebuild and validate the domain types.
    pub fn to_params(&self) -> Result<(FactorStructure, MixtureParams)> {
        let structure = self.structure.to_structure()?;
        let (p, q, k) = (self.structure.p, self.structure.q, self.efa.k);
        let params = MixtureParams {
            cfa: CfaParams {
                loadings: vec_to_mat(&self.cfa.loadings, p, q, "cfa.loadings")?,
                factor_corr: vec_to_mat(&self.cfa.factor_corr, q, q, "cfa.factor_corr")?,
                uniquenesses: DVector::from_row_slice(&self.cfa.uniquenesses),
                factor_means: DVector::from_row_slice(&self.cfa.factor_means),
                means_fixed_zero: self.means_fixed_zero,
            },
            efa: EfaParams {
                loadings: vec_to_mat(&self.efa.loadings, p, k, "efa.loadings")?,
                uniquenesses: DVector::from_row_slice(&self.efa.uniquenesses),
                factor_means: DVector::from_row_slice(&self.efa.factor_means),
            },
            reg: MixtureReg {
                beta: DVector::from_row_slice(&self.reg.beta),
                covariate_names: self.reg.covariate_names.clone(),
            },
        };
        params.validate(&structure)?;
        Ok((structure, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_round_trip_bit_exact() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(5, &[77]);
        let structure = FactorStructure::simple(6, 2).unwrap();
        let mut loadings = DMatrix::zeros(6, 2);
        for j in 0..6 {
            for &k in &structure.free_cols(j) {
                loadings[(j, k)] = rng.random_range(0.05..0.99);
            }
        }
        let params = MixtureParams {
            cfa: CfaParams {
                loadings,
                factor_corr: DMatrix::from_row_slice(2, 2, &[1.0, 0.31, 0.31, 1.0]),
                uniquenesses: DVector::from_fn(6, |_, _| rng.random_range(0.2..1.0)),
                factor_means: DVector::zeros(2),
                means_fixed_zero: true,
            },
            efa: EfaParams {
                loadings: DMatrix::from_fn(6, 1, |_, _| rng.random_range(-1.0..1.0)),
                uniquenesses: DVector::from_fn(6, |_, _| rng.random_range(0.2..1.0)),
                factor_means: DVector::from_element(1, 1.0 / 3.0),
            },
            reg: MixtureReg::intercept_only(0.1 + 0.2),
        };
        let doc = ParamsDoc::from_params(&structure, &params);
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: ParamsDoc = serde_json::from_str(&json).unwrap();
        let (s2, p2) = parsed.to_params().unwrap();
        assert_eq!(s2, structure);
        assert_eq!(p2, params);
    }
}
