//! Iterated evaluation of lowered plans.
//!
//! A [`LogicalPlan`] runs as "algebra inside a while loop": the recursive
//! relation starts as the initial query's result, then each iteration
//! recomputes every computed-by temporary from scratch (in dependency
//! order), evaluates the step, and merges the step into the recursive
//! relation under the statement's union mode. The loop exits on the first
//! of, in this order:
//!
//! 1. the step result is empty ([`ExitReason::EmptyStep`]),
//! 2. the merge leaves the relation exactly unchanged, compared bitwise
//!    on canonically ordered rows ([`ExitReason::Fixpoint`]),
//! 3. the iteration count reaches the bound ([`ExitReason::Bound`]).
//!
//! The step result of every completed iteration is merged, including the
//! final one. Each iteration appends an [`IterationStat`] to the trace;
//! by construction the `changed` flag is `false` only on the last entry,
//! and only when the exit reason is not [`ExitReason::Bound`].
//!
//! Name resolution while evaluating a node prefers the per-iteration
//! locals (the recursive relation and the temporaries computed so far)
//! over the catalog of base relations.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::expr::{col, Expr, ExprError};
use crate::relation::{static_agg_type, Accumulator, Relation, RelationError};
use crate::sql::ast::UnionMode;
use crate::sql::lower::{LogicalPlan, PlanNode, ProjItem};
use crate::types::{AttrType, Schema, Value};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown relation `{0}`")]
    UnknownTable(String),
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// The database: named base relations. Names are case-insensitive and
/// stored lowercased, matching the identifiers of the query dialect.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Relation>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    /// Registers (or replaces) a relation under `name`.
    pub fn insert(&mut self, name: &str, relation: Relation) {
        self.tables.insert(name.to_lowercase(), relation);
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.tables.get(&name.to_lowercase())
    }

    pub fn remove(&mut self, name: &str) -> Option<Relation> {
        self.tables.remove(&name.to_lowercase())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.contains_key(&name.to_lowercase())
    }

    /// Sorted table names, the `base_tables` input of validation.
    pub fn names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    /// The step produced no rows.
    EmptyStep,
    /// Merging the step left the recursive relation exactly unchanged.
    Fixpoint,
    /// The iteration bound was reached.
    Bound,
}

impl std::fmt::Display for ExitReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExitReason::EmptyStep => "empty step",
            ExitReason::Fixpoint => "fixpoint",
            ExitReason::Bound => "iteration bound",
        };
        f.write_str(s)
    }
}

/// Per-iteration measurements. `rows` is the size of the recursive
/// relation after the merge; `changed` records whether the merge
/// altered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStat {
    pub iteration: usize,
    pub rows: usize,
    pub changed: bool,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    pub iterations: Vec<IterationStat>,
    pub exit: ExitReason,
}

impl EvalTrace {
    /// The trace as a relation `(iteration, rows, changed, millis)` for
    /// CSV export; `changed` is 0/1.
    pub fn to_relation(&self) -> Relation {
        let schema = Schema::from_pairs(&[
            ("iteration", AttrType::Int),
            ("rows", AttrType::Int),
            ("changed", AttrType::Int),
            ("millis", AttrType::Real),
        ]);
        let rows = self
            .iterations
            .iter()
            .map(|s| {
                vec![
                    Value::Int(s.iteration as i64),
                    Value::Int(s.rows as i64),
                    Value::Int(s.changed as i64),
                    Value::Real(s.millis),
                ]
            })
            .collect();
        Relation::new(schema, rows).expect("trace rows are well-typed")
    }
}

/// Everything a run produces: the final query's result, the settled
/// recursive relation it was computed from, and the iteration trace.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub result: Relation,
    pub settled: Relation,
    pub trace: EvalTrace,
}

/// Runs the plan from its initial query.
pub fn evaluate(plan: &LogicalPlan, db: &Catalog) -> Result<(Relation, EvalTrace), EvalError> {
    let out = evaluate_full(plan, db, None)?;
    Ok((out.result, out.trace))
}

/// Runs the plan with `initial` in place of the initial query's result;
/// its columns must match the declared columns. Resuming with the settled
/// relation of a previous run continues that run.
pub fn evaluate_resumable(
    plan: &LogicalPlan,
    db: &Catalog,
    initial: Relation,
) -> Result<(Relation, EvalTrace), EvalError> {
    let out = evaluate_full(plan, db, Some(initial))?;
    Ok((out.result, out.trace))
}

/// As [`evaluate`]/[`evaluate_resumable`], but also exposes the settled
/// recursive relation (callers that alternate evaluation with work of
/// their own resume from it).
pub fn evaluate_full(
    plan: &LogicalPlan,
    db: &Catalog,
    initial: Option<Relation>,
) -> Result<EvalOutcome, EvalError> {
    let empty = BTreeMap::new();
    let mut r = match initial {
        Some(rel) => {
            let names = rel.schema().names();
            if names != plan.columns {
                return Err(EvalError::Schema(format!(
                    "resume relation columns {:?} do not match declared columns {:?}",
                    names, plan.columns
                )));
            }
            rel
        }
        None => eval_node(&plan.init, &Env { db, locals: &empty })?,
    };

    let mut iterations = Vec::new();
    let mut exit = None;
    let mut t: u32 = 0;
    while exit.is_none() {
        t += 1;
        let started = Instant::now();
        let wrap = |e: EvalError| EvalError::Iteration {
            iteration: t as usize,
            source: Box::new(e),
        };

        let mut locals: BTreeMap<String, Relation> = BTreeMap::new();
        locals.insert(plan.recursive_name.clone(), r.clone());
        for (name, node) in &plan.temporaries {
            let rel = eval_node(node, &Env { db, locals: &locals }).map_err(wrap)?;
            locals.insert(name.clone(), rel);
        }
        let step = eval_node(&plan.step, &Env { db, locals: &locals }).map_err(wrap)?;

        let mut changed = false;
        if step.is_empty() {
            exit = Some(ExitReason::EmptyStep);
        } else {
            let merged = match &plan.union_mode {
                UnionMode::UnionAll => r.union_distinct(&step),
                UnionMode::UnionByUpdate(key) => r.union_by_update(&step, key),
            }
            .map_err(|e| wrap(EvalError::Relation(e)))?;
            changed = !merged.bag_equal(&r);
            r = merged;
            if !changed {
                exit = Some(ExitReason::Fixpoint);
            } else if t >= plan.max_recursion {
                exit = Some(ExitReason::Bound);
            }
        }
        iterations.push(IterationStat {
            iteration: t as usize,
            rows: r.len(),
            changed,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let mut finals: BTreeMap<String, Relation> = BTreeMap::new();
    finals.insert(plan.recursive_name.clone(), r);
    let result = eval_node(&plan.final_plan, &Env { db, locals: &finals })?;
    let settled = finals
        .remove(&plan.recursive_name)
        .expect("settled relation still registered");
    Ok(EvalOutcome {
        result,
        settled,
        trace: EvalTrace {
            iterations,
            exit: exit.expect("loop exits only with a reason"),
        },
    })
}

/// Evaluates a single plan node against the catalog, outside any loop.
pub fn evaluate_node(node: &PlanNode, db: &Catalog) -> Result<Relation, EvalError> {
    let empty = BTreeMap::new();
    eval_node(node, &Env { db, locals: &empty })
}

/// Resolution environment: per-iteration locals shadow base relations.
struct Env<'a> {
    db: &'a Catalog,
    locals: &'a BTreeMap<String, Relation>,
}

impl<'a> Env<'a> {
    fn resolve(&self, name: &str) -> Result<&'a Relation, EvalError> {
        self.locals
            .get(name)
            .or_else(|| self.db.get(name))
            .ok_or_else(|| EvalError::UnknownTable(name.to_string()))
    }
}

fn qualify(rel: Relation, alias: &str) -> Result<Relation, EvalError> {
    let names = rel
        .schema()
        .names()
        .iter()
        .map(|n| format!("{alias}.{n}"))
        .collect();
    Ok(rel.renamed(names)?)
}

fn eval_node(node: &PlanNode, env: &Env<'_>) -> Result<Relation, EvalError> {
    match node {
        PlanNode::Scan { table, alias } => qualify(env.resolve(table)?.clone(), alias),
        PlanNode::SingleRow => {
            let schema = Schema::new(Vec::new()).map_err(RelationError::Schema)?;
            Ok(Relation::new(schema, vec![Vec::new()])?)
        }
        PlanNode::Qualify { input, alias } => qualify(eval_node(input, env)?, alias),
        PlanNode::Filter { input, predicate } => {
            Ok(eval_node(input, env)?.select(predicate)?)
        }
        PlanNode::Project { input, items } => {
            let rel = eval_node(input, env)?;
            let mut cols: Vec<(Expr, String)> = Vec::new();
            for item in items {
                match item {
                    ProjItem::Star => {
                        for (name, _) in rel.schema().attrs() {
                            let out = match name.split_once('.') {
                                Some((_, rest)) => rest,
                                None => name.as_str(),
                            };
                            cols.push((col(name), out.to_string()));
                        }
                    }
                    ProjItem::Named { expr, name } => cols.push((expr.clone(), name.clone())),
                }
            }
            Ok(rel.project(&cols)?)
        }
        PlanNode::Rename { input, columns } => {
            let rel = eval_node(input, env)?;
            if rel.schema().len() != columns.len() {
                return Err(EvalError::Schema(format!(
                    "select produces {} columns, but {} are declared",
                    rel.schema().len(),
                    columns.len()
                )));
            }
            Ok(rel.renamed(columns.clone())?)
        }
        PlanNode::Join { left, right, on } => {
            let l = eval_node(left, env)?;
            let r = eval_node(right, env)?;
            Ok(l.join(&r, on)?)
        }
        PlanNode::Cartesian { left, right } => {
            let l = eval_node(left, env)?;
            let r = eval_node(right, env)?;
            Ok(l.cartesian(&r)?)
        }
        PlanNode::GroupAggregate {
            input,
            group_by,
            aggs,
        } => Ok(eval_node(input, env)?.group_aggregate(group_by, aggs)?),
        PlanNode::WindowAgg {
            input,
            partition_by,
            agg,
        } => {
            let rel = eval_node(input, env)?;
            let schema = rel.schema().clone();
            let parts = partition_by
                .iter()
                .map(|e| e.bind(&schema))
                .collect::<Result<Vec<_>, _>>()?;
            let arg = agg.input.bind(&schema)?;

            // Pass 1: accumulate the aggregate per partition key.
            let mut groups: HashMap<Vec<Value>, Accumulator> = HashMap::new();
            let mut keys: Vec<Vec<Value>> = Vec::with_capacity(rel.len());
            for row in rel.rows() {
                let key = parts
                    .iter()
                    .map(|e| e.eval(row))
                    .collect::<Result<Vec<_>, _>>()?;
                groups
                    .entry(key.clone())
                    .or_insert_with(|| Accumulator::new(agg.op))
                    .feed(arg.eval(row)?)?;
                keys.push(key);
            }

            // Pass 2: append the partition's value to every row, in order.
            let mut out_ty = None;
            let mut finished: HashMap<Vec<Value>, Value> = HashMap::with_capacity(groups.len());
            for (key, acc) in groups {
                out_ty = Some(acc.output_type());
                finished.insert(key, acc.finish()?);
            }
            let ty = match out_ty {
                Some(t) => t,
                None => static_agg_type(agg, &schema)?,
            };
            let mut attrs = schema.attrs().to_vec();
            attrs.push((agg.output.clone(), ty));
            let out_schema = Schema::new(attrs).map_err(RelationError::Schema)?;
            let rows = rel
                .rows()
                .iter()
                .zip(&keys)
                .map(|(row, key)| {
                    let mut r = row.clone();
                    r.push(finished[key].clone());
                    r
                })
                .collect();
            Ok(Relation::new(out_schema, rows)?)
        }
        PlanNode::Union { inputs } => {
            let mut out: Option<Relation> = None;
            for node in inputs {
                let rel = eval_node(node, env)?;
                out = Some(match out {
                    None => rel,
                    Some(acc) => acc.concat(&rel)?,
                });
            }
            out.ok_or_else(|| EvalError::Schema("union of zero arms".into()))
        }
    }
}
