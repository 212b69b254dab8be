use aberrant_mix::em::{fit_em, refit_from, EmOptions, ModelSpec};
use aberrant_mix::model::*;
use aberrant_mix::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() {
    let (p, q) = (6usize, 2usize);
    let mut rng0 = stream_rng(17, &[50]);
    let structure = FactorStructure::simple(p, q).unwrap();
    let mut loadings = DMatrix::zeros(p, q);
    for j in 0..p { for &c in &structure.free_cols(j) { loadings[(j, c)] = rng0.random_range(0.4..0.9); } }
    let cfa = CfaParams { loadings, factor_corr: DMatrix::identity(q, q),
        uniquenesses: DVector::from_fn(p, |_, _| rng0.random_range(0.3..0.7)),
        factor_means: DVector::zeros(q), means_fixed_zero: true };
    let mut rng = stream_rng(18, &[51]);
    let rows = aberrant_mix::sim::gen_cfa_block(&cfa, 800, &mut rng).unwrap();
    let data = Dataset::intercept_only(rows, None).unwrap();
    let spec = ModelSpec::new(structure.clone(), 1, true);
    let opts = EmOptions { n_starts: 4, max_iter: 1500, tol: 1e-7, seed: 6, ..EmOptions::default() };
    let fit = fit_em(&data, &spec, &opts).unwrap();
    println!("mixture loglik = {:.4}, converged={} iters={}", fit.loglik(), fit.converged, fit.n_iter);
    println!("beta0={:.3}, min resp cfa themselves={:.4}", fit.params.reg.beta[0],
        (0..data.n()).map(|i| fit.responsibilities[(i,0)]).fold(f64::INFINITY, f64::min));
    let efa_share: f64 = (0..data.n()).map(|i| fit.responsibilities[(i,1)]).sum::<f64>() / data.n() as f64;
    println!("efa share = {:.4}", efa_share);

    let (oracle_cfa, _) = aberrant_mix::diagnostics::fit_cfa_single(&data, &structure, &opts).unwrap();
    // Degenerate mixture: CFA = oracle, EFA mimics first factor, beta0 big.
    let efa_mimic = EfaParams {
        loadings: DMatrix::from_column_slice(p, 1, oracle_cfa.loadings.column(0).clone_owned().as_slice()),
        uniquenesses: oracle_cfa.uniquenesses.clone(),
        factor_means: DVector::zeros(1),
    };
    let degenerate = MixtureParams { cfa: oracle_cfa.clone(), efa: efa_mimic, reg: MixtureReg::intercept_only(8.0) };
    let ll_deg = mixture_loglik(&data, &degenerate).unwrap();
    println!("degenerate-oracle loglik = {:.4}", ll_deg);
    // also: refit EM from the degenerate point
    let re = refit_from(&data, &spec, &opts, &degenerate).unwrap();
    println!("refit from degenerate: loglik = {:.4}, iters={}, conv={}", re.loglik(), re.n_iter, re.converged);
    let fitted_cov = assemble_cfa_cov(&re.params.cfa).unwrap();
    let oracle_cov = assemble_cfa_cov(&oracle_cfa).unwrap();
    println!("rel gap refit-vs-oracle = {:.6}", (&fitted_cov - &oracle_cov).norm() / oracle_cov.norm());
}
