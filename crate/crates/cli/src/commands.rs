//! Subcommand definitions and handlers.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use aberrant_mix::diagnostics::{corr_by_class, fit_cfa_single};
use aberrant_mix::em::{bootstrap_se, fit_em, EmOptions, ModelSpec};
use aberrant_mix::model::schema::{CfaDoc, ParamsDoc, StructureDoc};
use aberrant_mix::model::{classify, posterior_probs, Dataset, FactorStructure, MixtureParams};
use aberrant_mix::report::{
    append_metrics_csv, read_json, write_bootstrap_csv, write_classification_csv,
    write_fit_indices_json, write_json, write_matrix_csv, write_scan_csv, FitResultDoc,
    SelectionDoc, Study2TruthDoc,
};
use aberrant_mix::rng::{stream_rng, tag};
use aberrant_mix::selection::{scan, ScanConfig};
use aberrant_mix::sim::{
    gen_study1, gen_study2, run_study1_replication, run_study2_replication,
    score_classification, ReplicationRow, Study1Config, Study2Config,
};

use crate::io::{load_dataset, load_structure, read_truth_column, write_error_record, RunDir};

#[derive(Parser)]
#[command(
    name = "aberrant-mix",
    version,
    about = "CFA+EFA mixture modelling for detecting aberrant survey respondents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate mixture data (structured + genuinely different rows), or
    /// run a replication study over that design.
    Simulate1(Simulate1Args),
    /// Simulate rating data corrupted by SGR faking, or run a replication
    /// study over that design.
    Simulate2(Simulate2Args),
    /// Fit the mixture to a dataset.
    Fit(FitArgs),
    /// Scan EFA factor counts and covariate subsets; apply the
    /// entropy-conditioned selection rule.
    Select(SelectArgs),
    /// Posterior classification of a dataset under fitted parameters.
    Classify(ClassifyArgs),
    /// Nonparametric bootstrap standard errors for a fitted model.
    Bootstrap(BootstrapArgs),
    /// Single-component CFA baseline with CFI/RMSEA.
    CfaBaseline(CfaBaselineArgs),
    /// Per-class inter-item correlation matrices.
    CorrByClass(CorrByClassArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct EmArgs {
    /// Number of EM starts.
    #[arg(long, default_value_t = 10)]
    starts: usize,
    /// Log-likelihood convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl EmArgs {
    fn options(&self, seed: u64) -> EmOptions {
        EmOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            n_starts: self.starts,
            seed,
            ..EmOptions::default()
        }
    }
}

#[derive(Args, Serialize, Clone)]
pub struct InputArgs {
    /// Response matrix CSV.
    #[arg(long)]
    data: PathBuf,
    /// Covariate CSV (intercept added automatically).
    #[arg(long)]
    design: Option<PathBuf>,
    /// Ground-truth labels CSV (1 = non-aberrant).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Input CSVs carry no header row.
    #[arg(long)]
    no_header: bool,
    /// Z-score every response column before fitting.
    #[arg(long)]
    standardize: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        let data = load_dataset(
            &self.data,
            self.design.as_deref(),
            self.truth.as_deref(),
            !self.no_header,
        )?;
        Ok(if self.standardize {
            data.standardize_columns().0
        } else {
            data
        })
    }
}

#[derive(Args, Serialize)]
pub struct Simulate1Args {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    p: usize,
    /// Expected share of non-aberrant rows.
    #[arg(long)]
    pi: f64,
    /// CFA factor count of the generating model.
    #[arg(long, default_value_t = 3)]
    q: usize,
    /// EFA factor count of the generating model.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Number of mixture covariates (0-2).
    #[arg(long, default_value_t = 1)]
    c: usize,
    #[arg(long)]
    seed: u64,
    /// Run this many generate-fit-score replications instead of writing one
    /// dataset.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct Simulate2Args {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    p: usize,
    /// Expected share of honest rows.
    #[arg(long)]
    pi: f64,
    #[arg(long, default_value_t = 4.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.5)]
    delta: f64,
    /// Faking-good probability.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Rating-scale size.
    #[arg(long, default_value_t = 11)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Factor-structure JSON.
    #[arg(long)]
    structure: PathBuf,
    /// EFA factor count.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Constrain the CFA factor means to zero.
    #[arg(long)]
    means_fixed_zero: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    structure: PathBuf,
    /// Comma-separated EFA factor counts, e.g. `1,2,3`.
    #[arg(long, value_name = "K1,K2,...")]
    k_grid: String,
    /// Pipe-separated covariate subsets, comma-separated within a subset;
    /// an empty token is the intercept-only subset (e.g. `|age|age,gender`).
    #[arg(long, default_value = "")]
    covariates: String,
    #[arg(long)]
    means_fixed_zero: bool,
    /// Candidates with H within this band of the maximum stay eligible.
    #[arg(long, default_value_t = 0.005)]
    entropy_band: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Fitted parameters: a fit JSON or a bare parameter JSON.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    structure: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    means_fixed_zero: bool,
    /// Fitted parameters to bootstrap around; fitted here when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Number of bootstrap replicates.
    #[arg(long, value_name = "B")]
    bootstrap_reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct CfaBaselineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Serialize)]
pub struct CorrByClassArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Assignment CSV (a classification output or a single 0/1 column).
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let (name, out) = describe(&cli.command);
    let result = dispatch(cli);
    if let Err(err) = &result {
        write_error_record(&out, name, err);
    }
    result
}

fn describe(command: &Command) -> (&'static str, PathBuf) {
    match command {
        Command::Simulate1(a) => ("simulate1", a.out.clone()),
        Command::Simulate2(a) => ("simulate2", a.out.clone()),
        Command::Fit(a) => ("fit", a.out.clone()),
        Command::Select(a) => ("select", a.out.clone()),
        Command::Classify(a) => ("classify", a.out.clone()),
        Command::Bootstrap(a) => ("bootstrap", a.out.clone()),
        Command::CfaBaseline(a) => ("cfa-baseline", a.out.clone()),
        Command::CorrByClass(a) => ("corr-by-class", a.out.clone()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate1(args) => simulate1(args),
        Command::Simulate2(args) => simulate2(args),
        Command::Fit(args) => fit(args),
        Command::Select(args) => select(args),
        Command::Classify(args) => classify_cmd(args),
        Command::Bootstrap(args) => bootstrap(args),
        Command::CfaBaseline(args) => cfa_baseline(args),
        Command::CorrByClass(args) => corr_by_class_cmd(args),
    }
}

fn write_truth_csv(path: &Path, truth: &[u8]) -> Result<()> {
    let matrix = DMatrix::from_fn(truth.len(), 1, |i, _| f64::from(truth[i]));
    write_matrix_csv(path, &matrix, Some(&["z".to_string()]))?;
    Ok(())
}

fn simulate1(args: Simulate1Args) -> Result<()> {
    let cfg = Study1Config {
        n: args.n,
        p: args.p,
        pi: args.pi,
        q: args.q,
        k: args.k,
        c: args.c,
        seed: args.seed,
    };
    let mut run = RunDir::create(&args.out)?;
    match args.reps {
        None => {
            // The single dataset equals replication 0 of the study stream.
            let mut rng = stream_rng(cfg.seed, &[tag::STUDY1, 0]);
            let (data, truth) = gen_study1(&cfg, &mut rng)?;
            write_matrix_csv(
                &run.artifact("responses.csv"),
                &data.responses,
                Some(&data.item_labels),
            )?;
            if cfg.c > 0 {
                let covs = data.design.columns(1, cfg.c).clone_owned();
                write_matrix_csv(
                    &run.artifact("covariates.csv"),
                    &covs,
                    Some(&data.covariate_names),
                )?;
            }
            write_truth_csv(&run.artifact("truth.csv"), data.truth.as_ref().unwrap())?;
            write_json(
                &run.artifact("structure.json"),
                &StructureDoc::from(&truth.structure),
            )?;
            write_json(
                &run.artifact("params.json"),
                &ParamsDoc::from_params(&truth.structure, &truth.params),
            )?;
        }
        Some(reps) => {
            let em = args.em.options(cfg.seed);
            let mut rows = Vec::with_capacity(reps);
            for r in 0..reps {
                rows.push(run_study1_replication(&cfg, r, &em)?);
            }
            append_metrics_csv(&run.artifact("metrics.csv"), &rows)?;
        }
    }
    run.finish("simulate1", Some(args.seed), &args)
}

fn simulate2(args: Simulate2Args) -> Result<()> {
    let cfg = Study2Config {
        n: args.n,
        p: args.p,
        pi: args.pi,
        gamma: args.gamma,
        delta: args.delta,
        kappa: args.kappa,
        m: args.m,
        seed: args.seed,
        ..Study2Config::default()
    };
    let mut run = RunDir::create(&args.out)?;
    match args.reps {
        None => {
            let mut rng = stream_rng(cfg.seed, &[tag::STUDY2, 0]);
            let (data, truth) = gen_study2(&cfg, &mut rng)?;
            write_matrix_csv(
                &run.artifact("responses.csv"),
                &data.responses,
                Some(&data.item_labels),
            )?;
            write_matrix_csv(
                &run.artifact("unperturbed.csv"),
                &truth.unperturbed,
                Some(&data.item_labels),
            )?;
            write_truth_csv(&run.artifact("truth.csv"), data.truth.as_ref().unwrap())?;
            write_json(
                &run.artifact("structure.json"),
                &StructureDoc::from(&truth.structure),
            )?;
            write_json(
                &run.artifact("params.json"),
                &Study2TruthDoc::from_truth(&truth),
            )?;
        }
        Some(reps) => {
            let em = args.em.options(cfg.seed);
            let mut rows = Vec::with_capacity(reps);
            for r in 0..reps {
                rows.push(run_study2_replication(&cfg, r, &em)?);
            }
            append_metrics_csv(&run.artifact("metrics.csv"), &rows)?;
        }
    }
    run.finish("simulate2", Some(args.seed), &args)
}

fn fit(args: FitArgs) -> Result<()> {
    let data = args.input.load()?;
    let structure = load_structure(&args.structure)?;
    let spec = ModelSpec::new(structure.clone(), args.k, args.means_fixed_zero);
    let fit = fit_em(&data, &spec, &args.em.options(args.seed))?;
    let mut run = RunDir::create(&args.out)?;
    write_json(
        &run.artifact("fit.json"),
        &FitResultDoc::from_fit(&structure, &fit),
    )?;
    write_classification_csv(
        &run.artifact("classification.csv"),
        &data,
        &fit.responsibilities,
        &fit.assignments,
    )?;
    run.finish("fit", Some(args.seed), &args)
}

/// Parse `--params`: a fit document or a bare parameter document.
fn load_params(path: &Path) -> Result<(FactorStructure, MixtureParams)> {
    if let Ok(doc) = read_json::<FitResultDoc>(path) {
        return Ok(doc.parameters()?);
    }
    let doc: ParamsDoc =
        read_json(path).with_context(|| format!("parsing parameters from {}", path.display()))?;
    Ok(doc.to_params()?)
}

fn parse_k_grid(grid: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = grid
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing K grid '{grid}'"))?;
    if values.is_empty() {
        bail!("empty K grid");
    }
    Ok(values)
}

fn parse_covariate_subsets(spec: &str) -> Vec<Vec<String>> {
    spec.split('|')
        .map(|subset| {
            subset
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect()
        })
        .collect()
}

fn select(args: SelectArgs) -> Result<()> {
    let data = args.input.load()?;
    let structure = load_structure(&args.structure)?;
    let config = ScanConfig {
        k_values: parse_k_grid(&args.k_grid)?,
        covariate_subsets: parse_covariate_subsets(&args.covariates),
        means_fixed_zero: args.means_fixed_zero,
        entropy_band: args.entropy_band,
    };
    let outcome = scan(&data, &structure, &config, &args.em.options(args.seed))?;
    let mut run = RunDir::create(&args.out)?;
    write_scan_csv(&run.artifact("scan.csv"), &outcome)?;
    write_json(
        &run.artifact("selection.json"),
        &SelectionDoc::from_outcome(&outcome),
    )?;
    run.finish("select", Some(args.seed), &args)
}

fn classify_cmd(args: ClassifyArgs) -> Result<()> {
    let data = args.input.load()?;
    let (_, params) = load_params(&args.params)?;
    let responsibilities = posterior_probs(&data, &params)?;
    let assignments = classify(&responsibilities);
    let mut run = RunDir::create(&args.out)?;
    write_classification_csv(
        &run.artifact("classification.csv"),
        &data,
        &responsibilities,
        &assignments,
    )?;
    if let Some(truth) = &data.truth {
        let (counts, metrics) = score_classification(truth, &assignments);
        append_metrics_csv(
            &run.artifact("metrics.csv"),
            &[ReplicationRow {
                condition: "classify".into(),
                replication: 0,
                seed: args.seed,
                counts,
                metrics,
                recovery: None,
            }],
        )?;
    }
    run.finish("classify", Some(args.seed), &args)
}

fn bootstrap(args: BootstrapArgs) -> Result<()> {
    let data = args.input.load()?;
    let structure = load_structure(&args.structure)?;
    let spec = ModelSpec::new(structure.clone(), args.k, args.means_fixed_zero);
    let opts = args.em.options(args.seed);
    let point = match &args.params {
        Some(path) => load_params(path)?.1,
        None => fit_em(&data, &spec, &opts)?.params,
    };
    let table = bootstrap_se(&data, &spec, &point, &opts, args.bootstrap_reps)?;
    let mut run = RunDir::create(&args.out)?;
    write_bootstrap_csv(&run.artifact("bootstrap.csv"), &table)?;
    run.finish("bootstrap", Some(args.seed), &args)
}

fn cfa_baseline(args: CfaBaselineArgs) -> Result<()> {
    let data = args.input.load()?;
    let structure = load_structure(&args.structure)?;
    let (params, indices) = fit_cfa_single(&data, &structure, &args.em.options(0))?;
    let mut run = RunDir::create(&args.out)?;
    write_fit_indices_json(&run.artifact("fit_indices.json"), &indices)?;
    #[derive(Serialize)]
    struct BaselineDoc {
        structure: StructureDoc,
        cfa: CfaDoc,
    }
    write_json(
        &run.artifact("baseline_params.json"),
        &BaselineDoc {
            structure: (&structure).into(),
            cfa: CfaDoc::from_cfa(&params),
        },
    )?;
    run.finish("cfa-baseline", None, &args)
}

fn corr_by_class_cmd(args: CorrByClassArgs) -> Result<()> {
    let data = args.input.load()?;
    let assignments = read_truth_column(&args.assignments, !args.input.no_header, data.n())?;
    let (cfa_corr, efa_corr) = corr_by_class(&data, &assignments)?;
    let mut run = RunDir::create(&args.out)?;
    write_matrix_csv(&run.artifact("corr_cfa.csv"), &cfa_corr, Some(&data.item_labels))?;
    write_matrix_csv(&run.artifact("corr_efa.csv"), &efa_corr, Some(&data.item_labels))?;
    run.finish("corr-by-class", None, &args)
}
