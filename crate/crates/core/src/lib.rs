//! Embedded relational engine whose recursive query dialect is expressive
//! enough to train mixture models (Gaussian mixtures, mixtures of linear
//! regressions, mixtures of experts) by expectation–maximization entirely
//! inside the engine, materialize the fitted parameters as model views,
//! and keep those views consistent under inserts and deletes via cached
//! sufficient statistics instead of retraining.

pub mod eval;
pub mod expr;
pub mod io;
pub mod kernels;
pub mod maintenance;
pub mod models;
pub mod relation;
pub mod sql;
pub mod synth;
pub mod types;

pub use eval::{
    evaluate, evaluate_full, evaluate_node, evaluate_resumable, Catalog, EvalError, EvalOutcome,
    EvalTrace, ExitReason, IterationStat,
};
pub use expr::{col, lit, lit_int, qcol, BinOp, Expr, ExprError};
pub use kernels::KernelError;
pub use maintenance::{
    attach_triggers, model_downdate, model_update, params_from_stats, select_retain_set,
    stats_from_model, ComponentStats, MaintainedView, MaintenanceReport, ModelDb, SelectionPolicy,
    SelectionStrategy, SuffStats, TriggerSet,
};
pub use models::{
    cluster_assign, evaluate_clustering, train_gmm, train_mlr, train_moe, GmmComponent, GmmParams,
    InitStrategy, MlrComponent, MlrParams, ModelError, MoeComponent, MoeParams, TrainConfig,
    TrainOutcome, GMM_SCRIPT, MLR_SCRIPT, MOE_SCRIPT,
};
pub use relation::{
    elementwise_join, mm_join, mv_join, AggOp, AggSpec, Relation, RelationError, ScalarOp,
};
pub use types::{AttrType, Matrix, Schema, Value};
