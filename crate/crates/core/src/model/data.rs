//! The observed-data container: responses, covariate design, optional truth.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x p` response matrix together with the `n x (C+1)` design matrix of
/// the mixture-weight model (constant first column of ones) and, for
/// simulated data, the generating component indicator (`1` = CFA component).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub responses: DMatrix<f64>,
    pub design: DMatrix<f64>,
    /// Ground-truth component labels, when known (simulations, experiments).
    pub truth: Option<Vec<u8>>,
    /// Item labels; defaults to `v1..vp` when not supplied.
    pub item_labels: Vec<String>,
    /// Covariate labels, excluding the intercept.
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Build a dataset, validating shapes, finiteness, and the intercept
    /// column.
    pub fn new(
        responses: DMatrix<f64>,
        design: DMatrix<f64>,
        truth: Option<Vec<u8>>,
        item_labels: Option<Vec<String>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = responses.nrows();
        let p = responses.ncols();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter("empty response matrix".into()));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "responses contain missing or non-finite values".into(),
            ));
        }
        if design.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows for {} observations",
                design.nrows(),
                n
            )));
        }
        if design.ncols() == 0 || (0..n).any(|i| design[(i, 0)] != 1.0) {
            return Err(Error::InvalidParameter(
                "design must have a constant first column of ones".into(),
            ));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("design contains non-finite values".into()));
        }
        if covariate_names.len() != design.ncols() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} covariate columns",
                covariate_names.len(),
                design.ncols() - 1
            )));
        }
        if let Some(z) = &truth {
            if z.len() != n {
                return Err(Error::DimensionMismatch("truth length".into()));
            }
            if z.iter().any(|&v| v > 1) {
                return Err(Error::InvalidParameter("truth labels must be 0/1".into()));
            }
        }
        let item_labels = match item_labels {
            Some(labels) => {
                if labels.len() != p {
                    return Err(Error::DimensionMismatch("item label count".into()));
                }
                labels
            }
            None => (1..=p).map(|j| format!("v{j}")).collect(),
        };
        Ok(Self {
            responses,
            design,
            truth,
            item_labels,
            covariate_names,
        })
    }

    /// Dataset with an intercept-only design.
    pub fn intercept_only(responses: DMatrix<f64>, truth: Option<Vec<u8>>) -> Result<Self> {
        let n = responses.nrows();
        Self::new(
            responses,
            DMatrix::from_element(n, 1, 1.0),
            truth,
            None,
            Vec::new(),
        )
    }

    pub fn n(&self) -> usize {
        self.responses.nrows()
    }

    pub fn p(&self) -> usize {
        self.responses.ncols()
    }

    /// Number of covariates (design columns minus the intercept).
    pub fn n_covariates(&self) -> usize {
        self.design.ncols() - 1
    }

    /// Response row `i` as a column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.responses.row(i).transpose()
    }

    /// New dataset from the given row indices (with repetition allowed, as
    /// in bootstrap resampling). Truth labels follow the rows.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let mut responses = DMatrix::zeros(m, self.p());
        let mut design = DMatrix::zeros(m, self.design.ncols());
        for (out, &i) in indices.iter().enumerate() {
            responses.set_row(out, &self.responses.row(i));
            design.set_row(out, &self.design.row(i));
        }
        let truth = self
            .truth
            .as_ref()
            .map(|z| indices.iter().map(|&i| z[i]).collect());
        Self {
            responses,
            design,
            truth,
            item_labels: self.item_labels.clone(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Restrict the design to the named covariates (intercept always kept).
    pub fn with_covariate_subset(&self, names: &[String]) -> Result<Self> {
        let mut cols = vec![0usize];
        for name in names {
            let idx = self
                .covariate_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown covariate '{name}'")))?;
            cols.push(idx + 1);
        }
        let mut design = DMatrix::zeros(self.n(), cols.len());
        for (out, &c) in cols.iter().enumerate() {
            design.set_column(out, &self.design.column(c));
        }
        Self::new(
            self.responses.clone(),
            design,
            self.truth.clone(),
            Some(self.item_labels.clone()),
            names.to_vec(),
        )
    }

    /// Z-score every response column with its full-sample mean and standard
    /// deviation (denominator `n - 1`). Returns the transformed dataset and
    /// the per-column `(mean, sd)` pairs. Constant columns keep `sd = 1`.
    pub fn standardize_columns(&self) -> (Self, Vec<(f64, f64)>) {
        let n = self.n() as f64;
        let mut out = self.clone();
        let mut stats = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let col = self.responses.column(j);
            let mean = col.sum() / n;
            let var = if self.n() > 1 {
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..self.n() {
                out.responses[(i, j)] = (self.responses[(i, j)] - mean) / sd;
            }
            stats.push((mean, sd));
        }
        (out, stats)
    }
}
