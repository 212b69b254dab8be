//! Report emission: the CSV and JSON artifacts shared by the library tests
//! and the command-line front end.
//!
//! Data matrices are written at full (shortest-round-trip) precision so a
//! write-read cycle reproduces every value exactly; summary tables use six
//! decimals.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::FitIndices;
use crate::em::{BootstrapTable, FitResult};
use crate::error::{Error, Result};
use crate::model::schema::ParamsDoc;
use crate::model::{Dataset, FactorStructure, MixtureParams};
use crate::selection::ScanOutcome;
use crate::sim::ReplicationRow;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::io_at(path.display().to_string(), e)
    })?))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Write a numeric matrix as CSV at full precision, with an optional header
/// row of labels.
pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>, labels: Option<&[String]>) -> Result<()> {
    let mut w = create(path)?;
    if let Some(labels) = labels {
        writeln!(w, "{}", labels.join(","))?;
    }
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| matrix[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(w.flush()?)
}

/// Read a rectangular numeric CSV; `has_header` consumes the first row as
/// item labels. Rejects ragged rows, empty input, and non-numeric cells
/// (named by 1-based row/column).
pub fn read_matrix_csv(path: &Path, has_header: bool) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::CsvShape(format!("{}: {e}", path.display())))?;
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvShape(e.to_string()))?;
        if line == 0 && has_header {
            labels = Some(record.iter().map(|s| s.trim().to_string()).collect());
            continue;
        }
        let row_no = rows.len() + 1;
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::CsvCell {
                row: row_no,
                col: col + 1,
                message: format!("'{}' is not a number", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvCell {
                    row: row_no,
                    col: col + 1,
                    message: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::CsvShape(format!(
                    "row {} has {} cells, expected {w}",
                    row_no,
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    let width = width.ok_or_else(|| Error::CsvShape("empty CSV".into()))?;
    if width == 0 {
        return Err(Error::CsvShape("rows have no cells".into()));
    }
    if let Some(labels) = &labels {
        if labels.len() != width {
            return Err(Error::CsvShape(format!(
                "header has {} labels for {width} columns",
                labels.len()
            )));
        }
    }
    let n = rows.len();
    let mut m = DMatrix::zeros(n, width);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok((m, labels))
}

/// Serializable mirror of a finished fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultDoc {
    #[serde(flatten)]
    pub params: ParamsDoc,
    pub loglik_trace: Vec<f64>,
    /// Row-major `n x 2`.
    pub responsibilities: Vec<f64>,
    pub assignments: Vec<u8>,
    pub converged: bool,
    pub n_iter: usize,
    pub n_params: usize,
    pub entropy_raw: f64,
}

impl FitResultDoc {
    pub fn from_fit(structure: &FactorStructure, fit: &FitResult) -> Self {
        let n = fit.responsibilities.nrows();
        let mut responsibilities = Vec::with_capacity(2 * n);
        for i in 0..n {
            responsibilities.push(fit.responsibilities[(i, 0)]);
            responsibilities.push(fit.responsibilities[(i, 1)]);
        }
        Self {
            params: ParamsDoc::from_params(structure, &fit.params),
            loglik_trace: fit.loglik_trace.clone(),
            responsibilities,
            assignments: fit.assignments.clone(),
            converged: fit.converged,
            n_iter: fit.n_iter,
            n_params: fit.n_params,
            entropy_raw: fit.entropy_raw,
        }
    }

    pub fn parameters(&self) -> Result<(FactorStructure, MixtureParams)> {
        self.params.to_params()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io_at(path.display().to_string(), e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Scan table in the published column order; classification metrics appear
/// when any row carries them.
pub fn write_scan_csv(path: &Path, outcome: &ScanOutcome) -> Result<()> {
    let with_metrics = outcome.rows.iter().any(|r| r.metrics.is_some());
    let mut w = create(path)?;
    let mut header = "model,loglik,AIC,CAIC,BIC,ssBIC,CLC,ICL_BIC,H".to_string();
    if with_metrics {
        header.push_str(",BACC,MCC,SE,SP");
    }
    header.push_str(",status");
    writeln!(w, "{header}")?;
    for row in &outcome.rows {
        match &row.report {
            Some(rep) => {
                let mut line = format!(
                    "{},{},{},{},{},{},{},{},{}",
                    row.label,
                    fmt6(rep.loglik),
                    fmt6(rep.aic),
                    fmt6(rep.caic),
                    fmt6(rep.bic),
                    fmt6(rep.ss_bic),
                    fmt6(rep.clc),
                    fmt6(rep.icl_bic),
                    fmt6(rep.h),
                );
                if with_metrics {
                    match &row.metrics {
                        Some(m) => line.push_str(&format!(
                            ",{},{},{},{}",
                            fmt6(m.bacc),
                            fmt6(m.mcc),
                            fmt6(m.se),
                            fmt6(m.sp)
                        )),
                        None => line.push_str(",,,,"),
                    }
                }
                line.push_str(",ok");
                writeln!(w, "{line}")?;
            }
            None => {
                let blanks = if with_metrics { ",,,,,,,,,,,," } else { ",,,,,,,," };
                writeln!(
                    w,
                    "{}{blanks},failed: {}",
                    row.label,
                    row.error.as_deref().unwrap_or("unknown")
                )?;
            }
        }
    }
    Ok(w.flush()?)
}

/// JSON record of the entropy-conditioned selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub selected: Option<String>,
    pub selected_index: Option<usize>,
    pub entropy_band: f64,
    pub winner_aic: Option<String>,
    pub winner_caic: Option<String>,
    pub winner_bic: Option<String>,
    pub winner_ss_bic: Option<String>,
    pub winner_clc: Option<String>,
    pub winner_icl_bic: Option<String>,
    pub winner_h: Option<String>,
}

impl SelectionDoc {
    pub fn from_outcome(outcome: &ScanOutcome) -> Self {
        let label = |idx: Option<usize>| idx.map(|i| outcome.rows[i].label.clone());
        Self {
            selected: label(outcome.selected),
            selected_index: outcome.selected,
            entropy_band: outcome.entropy_band,
            winner_aic: label(outcome.winners.aic),
            winner_caic: label(outcome.winners.caic),
            winner_bic: label(outcome.winners.bic),
            winner_ss_bic: label(outcome.winners.ss_bic),
            winner_clc: label(outcome.winners.clc),
            winner_icl_bic: label(outcome.winners.icl_bic),
            winner_h: label(outcome.winners.h),
        }
    }
}

/// Bootstrap table: one row per parameter cell.
pub fn write_bootstrap_csv(path: &Path, table: &BootstrapTable) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "block,row,col,estimate,se,n_effective_replicates")?;
    for cell in &table.cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            cell.block,
            cell.row,
            cell.col,
            fmt6(cell.estimate),
            fmt6(cell.se),
            table.n_effective
        )?;
    }
    Ok(w.flush()?)
}

/// Per-row classification output: responsibilities at full precision plus
/// the hard assignment (and truth when bundled).
pub fn write_classification_csv(
    path: &Path,
    data: &Dataset,
    responsibilities: &DMatrix<f64>,
    assignments: &[u8],
) -> Result<()> {
    let mut w = create(path)?;
    let with_truth = data.truth.is_some();
    writeln!(
        w,
        "row,p_cfa,p_efa,assignment{}",
        if with_truth { ",truth" } else { "" }
    )?;
    for i in 0..data.n() {
        let mut line = format!(
            "{},{},{},{}",
            i + 1,
            responsibilities[(i, 0)],
            responsibilities[(i, 1)],
            assignments[i]
        );
        if let Some(z) = &data.truth {
            line.push_str(&format!(",{}", z[i]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(w.flush()?)
}

const METRICS_HEADER: &str = "condition,replication,seed,TP,FP,TN,FN,SE,SP,BACC,MCC,\
bias_lambda,rmse_lambda,bias_theta,rmse_theta,bias_phi,rmse_phi,bias_mu,rmse_mu,bias_pi,rmse_pi";

/// Append replication rows to a metrics CSV, writing the header when the
/// file does not exist yet.
pub fn append_metrics_csv(path: &Path, rows: &[ReplicationRow]) -> Result<()> {
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io_at(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{METRICS_HEADER}")?;
    }
    for row in rows {
        let m = &row.metrics;
        let c = &row.counts;
        let recovery = match &row.recovery {
            Some(r) => format!(
                "{},{},{},{},{},{},{},{},{},{}",
                fmt6(r.lambda.bias),
                fmt6(r.lambda.rmse),
                fmt6(r.theta_delta.bias),
                fmt6(r.theta_delta.rmse),
                fmt6(r.phi.bias),
                fmt6(r.phi.rmse),
                fmt6(r.mu.bias),
                fmt6(r.mu.rmse),
                fmt6(r.pi.bias),
                fmt6(r.pi.rmse)
            ),
            None => ",,,,,,,,,".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{recovery}",
            row.condition,
            row.replication,
            row.seed,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            fmt6(m.se),
            fmt6(m.sp),
            fmt6(m.bacc),
            fmt6(m.mcc)
        )?;
    }
    Ok(w.flush()?)
}

/// Small JSON record of baseline fit indices.
pub fn write_fit_indices_json(path: &Path, indices: &FitIndices) -> Result<()> {
    write_json(path, indices)
}

/// Generating truth of a faking-perturbation dataset: the CFA block plus the
/// mixing proportion and the discretization cut points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study2TruthDoc {
    pub structure: crate::model::schema::StructureDoc,
    pub cfa: crate::model::schema::CfaDoc,
    pub means_fixed_zero: bool,
    pub pi: f64,
    pub thresholds: Vec<f64>,
}

impl Study2TruthDoc {
    pub fn from_truth(truth: &crate::sim::Study2Truth) -> Self {
        Self {
            structure: (&truth.structure).into(),
            cfa: crate::model::schema::CfaDoc::from_cfa(&truth.cfa),
            means_fixed_zero: truth.cfa.means_fixed_zero,
            pi: truth.pi,
            thresholds: truth.thresholds.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn matrix_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rng = crate::rng::stream_rng(1, &[1]);
        let m = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-1.0e3..1.0e3) / 7.0);
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        write_matrix_csv(&path, &m, Some(&labels)).unwrap();
        let (back, parsed_labels) = read_matrix_csv(&path, true).unwrap();
        assert_eq!(back, m);
        assert_eq!(parsed_labels.unwrap(), labels);
    }

    #[test]
    fn csv_errors_name_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1.0,2.0\n3.0,NA\n").unwrap();
        match read_matrix_csv(&path, false) {
            Err(Error::CsvCell { row, col, .. }) => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected cell error, got {other:?}"),
        }

        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(read_matrix_csv(&path, false), Err(Error::CsvShape(_))));

        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_matrix_csv(&path, false), Err(Error::CsvShape(_))));
    }

    #[test]
    fn small_header_csv_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.csv");
        std::fs::write(&path, "x,y\n1,2\n3,4\n5,6\n").unwrap();
        let (m, labels) = read_matrix_csv(&path, true).unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(labels.unwrap(), vec!["x", "y"]);
    }
}
