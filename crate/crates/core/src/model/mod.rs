//! Model parameters, data containers, and density evaluation for the
//! CFA+EFA mixture.

mod data;
mod density;
mod params;
pub mod schema;
mod structure;

pub use data::Dataset;
pub(crate) use density::logistic;
pub use density::{
    classify, log_mixture_weights, mixture_loglik, mixture_weights, mvn_logdensity,
    posterior_probs, ComponentContext,
};
pub use params::{
    assemble_cfa_cov, assemble_efa_cov, count_params, CfaParams, EfaParams, MixtureParams,
    MixtureReg,
};
pub use structure::FactorStructure;
