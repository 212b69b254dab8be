//! Synthetic-data generators, the SGR faking perturbation, classification
//! and recovery scoring, and the replication studies built on them.

mod gen;
mod lkj;
mod metrics;
mod sgr;
mod study;

pub use gen::{
    gen_cfa_block, gen_efa_block, gen_study1, gen_study2, Study1Config, Study1Truth,
    Study2Config, Study2Truth,
};
pub use lkj::sample_lkj;
pub use metrics::{
    score_classification, score_recovery, BlockRecovery, ClassMetrics, ConfusionCounts,
    RecoveryReport,
};
pub use sgr::{default_thresholds, discretize, perturb_faking, sgr_replacement_matrix};
pub use study::{
    run_study1_replication, run_study2_replication, study2_fit_pipeline, ReplicationRow,
};
