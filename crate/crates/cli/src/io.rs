//! Input assembly and run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;

use aberrant_mix::model::schema::StructureDoc;
use aberrant_mix::model::{Dataset, FactorStructure};
use aberrant_mix::report::{read_json, read_matrix_csv, write_json};

/// Read the response CSV plus optional covariate design and truth columns
/// into a dataset. The design CSV holds covariates only; the intercept
/// column is added here.
pub fn load_dataset(
    data: &Path,
    design: Option<&Path>,
    truth: Option<&Path>,
    has_header: bool,
) -> Result<Dataset> {
    let (responses, item_labels) =
        read_matrix_csv(data, has_header).with_context(|| format!("reading {}", data.display()))?;
    let n = responses.nrows();

    let (design_matrix, covariate_names) = match design {
        Some(path) => {
            let (covs, labels) = read_matrix_csv(path, has_header)
                .with_context(|| format!("reading {}", path.display()))?;
            if covs.nrows() != n {
                bail!(
                    "design has {} rows but responses have {n}",
                    covs.nrows()
                );
            }
            let c = covs.ncols();
            let mut full = DMatrix::from_element(n, c + 1, 1.0);
            for j in 0..c {
                full.set_column(j + 1, &covs.column(j));
            }
            let names =
                labels.unwrap_or_else(|| (1..=c).map(|j| format!("x{j}")).collect::<Vec<_>>());
            (full, names)
        }
        None => (DMatrix::from_element(n, 1, 1.0), Vec::new()),
    };

    let truth_labels = match truth {
        Some(path) => Some(read_truth_column(path, has_header, n)?),
        None => None,
    };

    Ok(Dataset::new(
        responses,
        design_matrix,
        truth_labels,
        item_labels,
        covariate_names,
    )?)
}

/// One 0/1 column, from either a bare vector CSV or a file whose header
/// names the column (`z`, `truth`, or `assignment`).
pub fn read_truth_column(path: &Path, has_header: bool, expect_n: usize) -> Result<Vec<u8>> {
    let (matrix, labels) = read_matrix_csv(path, has_header)
        .with_context(|| format!("reading {}", path.display()))?;
    let col = match &labels {
        Some(names) => names
            .iter()
            .position(|l| matches!(l.as_str(), "z" | "truth" | "assignment"))
            .unwrap_or(0),
        None => 0,
    };
    if matrix.nrows() != expect_n {
        bail!(
            "{} has {} rows but the responses have {expect_n}",
            path.display(),
            matrix.nrows()
        );
    }
    matrix
        .column(col)
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 {
                Ok(1u8)
            } else {
                bail!("labels must be 0/1, found {v}")
            }
        })
        .collect()
}

pub fn load_structure(path: &Path) -> Result<FactorStructure> {
    let doc: StructureDoc =
        read_json(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(doc.to_structure()?)
}

/// Wall-time-stamped record of one invocation, written next to its outputs.
#[derive(Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: C,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub struct RunDir {
    pub out: PathBuf,
    started: Instant,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    /// Register an artifact path (relative to the output directory).
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    pub fn finish<C: Serialize>(
        self,
        command: &'static str,
        seed: Option<u64>,
        config: C,
    ) -> Result<()> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            outputs: self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.out.join("manifest.json"), &manifest)?;
        Ok(())
    }
}

/// Write a machine-readable error record before exiting nonzero.
pub fn write_error_record(out: &Path, command: &str, err: &anyhow::Error) {
    #[derive(Serialize)]
    struct ErrorDoc<'a> {
        command: &'a str,
        error: String,
    }
    if std::fs::create_dir_all(out).is_ok() {
        let _ = write_json(
            &out.join("error.json"),
            &ErrorDoc {
                command,
                error: format!("{err:#}"),
            },
        );
    }
}
