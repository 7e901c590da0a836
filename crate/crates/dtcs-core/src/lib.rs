//! Core algorithms for soft-label diverse-target supervision with
//! momentum-based domain contribution balancing, plus the ERM and
//! sign-agreement baselines they are verified against.
//!
//! The crate is `no_std` (with `alloc`): it holds the autodiff tape, the
//! MLP family, losses, soft-target generators, the training loop, synthetic
//! multi-domain data generation, and diagnostics. Anything that touches the
//! filesystem or a process boundary lives in the companion `dtcs-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod diag;
pub mod error;
pub mod loss;
pub mod mat;
pub mod mlp;
pub mod optim;
pub mod prophet;
pub mod rng;
pub mod tape;
pub mod train;

pub use data::{
    generate_synthetic, ingest_csv, leave_one_out, sample_batch, split, BatchSampler, Domain,
    DomainBatch, MultiDomainDataset, SplitPlan, SyntheticSpec,
};
pub use diag::{
    conflict_stats, converged_loss_std, evaluate, gs, median_heuristic_gamma, mmd_squared,
    stability_report, ConflictStats, ConvergedStd, GsVariant, StabilityReport,
};
pub use error::{CoreError, Result};
pub use loss::{
    cross_entropy, domain_loss, kl_divergence, tempered_softmax, KlOrder, LossBreakdown,
    SoftTarget,
};
pub use mat::Mat;
pub use mlp::MlpModel;
pub use optim::{OptimConfig, SgdOptimizer};
pub use prophet::{pretrain_experts, train_mc_heads, Prophet, ProphetKind, SoftTargetBatch};
pub use tape::{NodeId, Tape};
pub use train::{
    agr_sum_step, combine_sign_agreement, dcb_update, erm_step, param_hash, run_training,
    weighted_total_loss, DomainWeights, EvalRecord, IterationRecord, Method, MomentumSchedule,
    ProphetSpec, RunData, RunOutput, RunRecord, TrainFailure, TrainPlan,
};
