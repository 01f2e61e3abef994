//! The model library: Gaussian mixtures, mixtures of linear regressions,
//! and mixtures of experts, each trained by an enhanced-recursive-`with`
//! script executed through the engine. The host side supplies
//! initialization, a per-iteration log-likelihood trace, empty-component
//! repair, posterior inference, cluster assignment, and clustering
//! metrics.
//!
//! Training materializes the parameters as a relation ("model view"):
//! the scripts in `scripts/` are parsed, validated, and lowered at run
//! time, then stepped one iteration per engine call so the host can
//! record the likelihood and repair degenerate components between
//! iterations. Stepping is exact: `union by update` replaces every
//! component row each iteration, so resuming from the previous settled
//! relation reproduces an uninterrupted run.

pub mod gmm;
pub mod metrics;
pub mod mlr;
pub mod moe;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{evaluate_full, Catalog, EvalError};
use crate::kernels::KernelError;
use crate::relation::{Relation, RelationError};
use crate::sql::lower::{lower, LogicalPlan};
use crate::sql::parser::parse;
use crate::sql::validate::validate;
use crate::types::{AttrType, Matrix, Schema, Value};

pub use gmm::{train_gmm, GmmComponent, GmmParams};
pub use metrics::{cluster_assign, evaluate_clustering};
pub use mlr::{train_mlr, MlrComponent, MlrParams};
pub use moe::{train_moe, MoeComponent, MoeParams};

/// The training scripts shipped with the library; parsed at run time so
/// the dialect demonstrably expresses the models.
pub const GMM_SCRIPT: &str = include_str!("scripts/gmm.sql");
pub const MLR_SCRIPT: &str = include_str!("scripts/mlr.sql");
pub const MOE_SCRIPT: &str = include_str!("scripts/moe.sql");

/// Responsibility mass below which a component counts as empty.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("model relation malformed: {0}")]
    Params(String),
    #[error("training script failed to build: {0}")]
    Script(String),
    #[error("component {k} has no responsibility mass")]
    EmptyComponent { k: i64 },
    #[error("degenerate design: {0}")]
    SingularDesign(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// How a trainer builds its initial parameter relation.
#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Draw the location parameters uniformly from `[lo, hi]` per entry;
    /// spreads start at the data's own second moments.
    RandomUniform { lo: f64, hi: f64 },
    /// Start from a caller-supplied parameter relation.
    Provided(Relation),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Number of mixture components.
    pub k: usize,
    /// Iterations per engine run (the recursion bound of one chunk).
    pub max_iterations: u32,
    pub seed: u64,
    pub init: InitStrategy,
    /// When set, training repeats `max_iterations`-sized chunks until the
    /// likelihood gain of a whole chunk drops below this threshold.
    pub epsilon: Option<f64>,
}

impl TrainConfig {
    pub fn new(k: usize, max_iterations: u32, seed: u64) -> Self {
        TrainConfig {
            k,
            max_iterations,
            seed,
            init: InitStrategy::RandomUniform { lo: 0.0, hi: 10.0 },
            epsilon: None,
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.k < 1 {
            return Err(ModelError::Config("component count must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(ModelError::Config("max_iterations must be at least 1".into()));
        }
        if let InitStrategy::RandomUniform { lo, hi } = self.init {
            if !(lo < hi) {
                return Err(ModelError::Config(format!(
                    "random init needs lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(ModelError::Config(format!(
                    "epsilon must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    /// Log-likelihood after initialization (index 0) and after every
    /// completed iteration.
    pub trace: Vec<f64>,
    /// Completed EM iterations.
    pub iterations: usize,
    /// Notes about repairs (e.g. reinitialized empty components).
    pub warnings: Vec<String>,
}

/// Hard cap on total iterations of the epsilon loop, guarding against a
/// threshold the likelihood never meets.
const EPSILON_LOOP_CAP: usize = 10_000;

/// Compiles a training script against its catalog and steps it one
/// iteration per call.
pub(crate) struct EmDriver {
    plan: LogicalPlan,
    db: Catalog,
}

impl EmDriver {
    pub(crate) fn new(script: &str, db: Catalog) -> Result<Self, ModelError> {
        let ast = parse(script).map_err(|e| ModelError::Script(e.to_string()))?;
        let graph = validate(&ast, &db.names()).map_err(|e| ModelError::Script(e.to_string()))?;
        let mut plan = lower(&ast, &graph).map_err(|e| ModelError::Script(e.to_string()))?;
        plan.max_recursion = 1;
        Ok(EmDriver { plan, db })
    }

    /// Runs exactly one EM iteration from `state`, returning the new
    /// parameter relation.
    pub(crate) fn step(&self, state: Relation) -> Result<Relation, ModelError> {
        let out = evaluate_full(&self.plan, &self.db, Some(state)).map_err(classify_eval)?;
        Ok(out.settled)
    }
}

/// Maps engine failures of the normal-equations solve to the dedicated
/// error; everything else passes through.
fn classify_eval(e: EvalError) -> ModelError {
    let msg = e.to_string();
    if msg.contains("singular") {
        ModelError::SingularDesign(msg)
    } else {
        ModelError::Eval(e)
    }
}

/// The shared training loop: step, parse, repair, score — then repeat
/// whole chunks while an epsilon threshold asks for more.
pub(crate) fn run_em<P>(
    driver: &EmDriver,
    mut params: P,
    cfg: &TrainConfig,
    mut to_relation: impl FnMut(&P) -> Relation,
    mut from_relation: impl FnMut(&Relation) -> Result<P, ModelError>,
    mut log_likelihood: impl FnMut(&P) -> Result<f64, ModelError>,
    mut repair: impl FnMut(&mut P) -> Vec<String>,
) -> Result<TrainOutcome<P>, ModelError> {
    let mut trace = vec![log_likelihood(&params)?];
    let mut warnings = Vec::new();
    let mut iterations = 0usize;
    loop {
        for _ in 0..cfg.max_iterations {
            let settled = driver.step(to_relation(&params))?;
            params = from_relation(&settled)?;
            warnings.append(&mut repair(&mut params));
            trace.push(log_likelihood(&params)?);
            iterations += 1;
        }
        let Some(eps) = cfg.epsilon else { break };
        let chunk = cfg.max_iterations as usize;
        let gain = trace[trace.len() - 1] - trace[trace.len() - 1 - chunk];
        if gain < eps || iterations >= EPSILON_LOOP_CAP {
            break;
        }
    }
    Ok(TrainOutcome { params, trace, iterations, warnings })
}

/// Feature points extracted from an input relation with `id` and `x`
/// columns; scalar `x` columns are treated as one-dimensional vectors.
#[derive(Debug, Clone)]
pub(crate) struct Points {
    pub ids: Vec<i64>,
    pub xs: Vec<Vec<f64>>,
    pub d: usize,
}

impl Points {
    pub fn len(&self) -> usize {
        self.ids.len()
    }
}

pub(crate) fn vector_points(rel: &Relation) -> Result<Points, ModelError> {
    let schema = rel.schema();
    let id_idx = schema.resolve(None, "id").map_err(ModelError::Data)?;
    let x_idx = schema.resolve(None, "x").map_err(ModelError::Data)?;
    let d = match schema.attr_type(x_idx) {
        AttrType::Vector(d) => d,
        AttrType::Real | AttrType::Int => 1,
        other => {
            return Err(ModelError::Data(format!(
                "feature column must be a vector or scalar, got {other}"
            )))
        }
    };
    let mut ids = Vec::with_capacity(rel.len());
    let mut xs = Vec::with_capacity(rel.len());
    let mut seen = std::collections::HashSet::new();
    for row in rel.rows() {
        let id = row[id_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[id_idx])))?;
        if !seen.insert(id) {
            return Err(ModelError::Data(format!("duplicate id {id}")));
        }
        let x = match &row[x_idx] {
            Value::Vector(v) => v.clone(),
            other => vec![other
                .as_f64()
                .ok_or_else(|| ModelError::Data(format!("feature must be numeric, got {other}")))?],
        };
        ids.push(id);
        xs.push(x);
    }
    if ids.is_empty() {
        return Err(ModelError::Data("no data points".into()));
    }
    Ok(Points { ids, xs, d })
}

/// As [`vector_points`], plus a scalar response column `y`.
pub(crate) fn labeled_points(rel: &Relation) -> Result<(Points, Vec<f64>), ModelError> {
    let points = vector_points(rel)?;
    let y_idx = rel.schema().resolve(None, "y").map_err(ModelError::Data)?;
    let ys = rel
        .rows()
        .iter()
        .map(|row| {
            row[y_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Data(format!("response must be numeric, got {}", row[y_idx])))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((points, ys))
}

/// Canonical data relation `(id, x)` the scripts read.
pub(crate) fn points_relation(pts: &Points) -> Relation {
    let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(pts.d))]);
    let rows = pts
        .ids
        .iter()
        .zip(&pts.xs)
        .map(|(&id, x)| vec![Value::Int(id), Value::Vector(x.clone())])
        .collect();
    Relation::new(schema, rows).expect("points are well-typed")
}

/// Canonical data relation `(id, x, y)` the regression scripts read.
pub(crate) fn labeled_relation(pts: &Points, ys: &[f64]) -> Relation {
    let schema = Schema::from_pairs(&[
        ("id", AttrType::Int),
        ("x", AttrType::Vector(pts.d)),
        ("y", AttrType::Real),
    ]);
    let rows = pts
        .ids
        .iter()
        .zip(&pts.xs)
        .zip(ys)
        .map(|((&id, x), &y)| vec![Value::Int(id), Value::Vector(x.clone()), Value::Real(y)])
        .collect();
    Relation::new(schema, rows).expect("points are well-typed")
}

/// One-row, one-column relation for hyperparameters.
pub(crate) fn scalar_relation(name: &str, value: f64) -> Relation {
    let schema = Schema::from_pairs(&[(name, AttrType::Real)]);
    Relation::new(schema, vec![vec![Value::Real(value)]]).expect("scalar is finite")
}

/// Biased sample covariance of the full data (the default initial and
/// pooled spread).
pub(crate) fn sample_covariance(pts: &Points) -> Matrix {
    let n = pts.len() as f64;
    let d = pts.d;
    let mut mean = vec![0.0; d];
    for x in &pts.xs {
        for j in 0..d {
            mean[j] += x[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut data = vec![0.0; d * d];
    for x in &pts.xs {
        for j in 0..d {
            for l in 0..d {
                data[j * d + l] += (x[j] - mean[j]) * (x[l] - mean[l]);
            }
        }
    }
    for v in &mut data {
        *v /= n;
    }
    Matrix::new(d, data)
}

/// Variance floor for covariance regularization: the square of 1e-6 times
/// the widest per-dimension data range, never below 1e-12.
pub(crate) fn variance_floor(pts: &Points) -> f64 {
    let mut range: f64 = 0.0;
    for j in 0..pts.d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in &pts.xs {
            lo = lo.min(x[j]);
            hi = hi.max(x[j]);
        }
        range = range.max(hi - lo);
    }
    (1e-6 * range).powi(2).max(1e-12)
}

/// Standard-deviation floor for the regression mixtures: 1e-6 times the
/// response range, never below 1e-12.
pub(crate) fn sigma_floor(ys: &[f64]) -> f64 {
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (1e-6 * (hi - lo)).max(1e-12)
}

/// Biased sample standard deviation of the responses (initial spread).
pub(crate) fn sample_sd(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt()
}

/// One uniform draw per entry, in row-major component order.
pub(crate) fn uniform_vector(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
}

/// Responsibility relation `(id, k, p)` in point-major order.
pub(crate) fn responsibilities_relation(
    ids: &[i64],
    ks: &[i64],
    probs: &[Vec<f64>],
) -> Relation {
    let schema = Schema::from_pairs(&[
        ("id", AttrType::Int),
        ("k", AttrType::Int),
        ("p", AttrType::Real),
    ]);
    let mut rows = Vec::with_capacity(ids.len() * ks.len());
    for (i, &id) in ids.iter().enumerate() {
        for (j, &k) in ks.iter().enumerate() {
            rows.push(vec![Value::Int(id), Value::Int(k), Value::Real(probs[i][j])]);
        }
    }
    Relation::new(schema, rows).expect("posteriors are finite")
}
