//! Lowering from validated statements to logical plans.
//!
//! Each select becomes a small operator tree. Scans qualify their columns
//! as `alias.attr` so references like `r.k` resolve exactly and bare names
//! resolve by unique suffix. Conjunctions of qualified equalities between
//! two sides of a from-list become hash-join conditions; everything else
//! stays a filter. A join drops the right side's key columns (their values
//! duplicate the left side), so the lowering rewrites later references to
//! a dropped column into its surviving left twin — `group by r.k` after
//! `where t.k = r.k` grades into `group by t.k`.
//!
//! Two projection rewrites run afterwards: window functions peel off into
//! [`PlanNode::WindowAgg`] nodes (per-partition aggregate appended to every
//! row), and aggregate calls move into a [`PlanNode::GroupAggregate`] with
//! placeholder columns (`__agg0`, …) that the final projection combines,
//! which is how `sum(p * x) / sum(p)` works. Arms and computed-by blocks
//! are wrapped in a [`PlanNode::Rename`] to their declared column names.

use super::ast::{FromItem, Projection, QueryAst, SelectAst, UnionMode};
use super::validate::DependencyGraph;
use crate::expr::{col, is_aggregate_call, BinOp, Expr, ExprError};
use crate::relation::{AggOp, AggSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LowerError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("window functions are not allowed in {site}")]
    WindowNotAllowed { site: String },
    #[error("window functions cannot be combined with grouped aggregation in one query")]
    WindowWithAggregates,
    #[error("aggregates are not allowed in {site}")]
    AggregateNotAllowed { site: String },
    #[error("aggregate arguments cannot contain nested aggregates or windows")]
    NestedAggregate,
    #[error("`{name}` is not an aggregate usable in a window")]
    BadWindowFunction { name: String },
    #[error("group by supports only column references")]
    GroupByNotColumn,
    #[error("`*` cannot be combined with aggregates or group by")]
    StarWithAggregates,
    #[error("`{name}` is bound twice in one from list; give the scans distinct aliases")]
    DuplicateAlias { name: String },
    #[error("`{name}` declares {declared} columns but its query projects {got}")]
    ColumnCountMismatch { name: String, declared: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjItem {
    /// Expands to every input column, qualifier prefixes stripped.
    Star,
    Named { expr: Expr, name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    /// Reads a named relation and qualifies its columns as `alias.attr`.
    Scan { table: String, alias: String },
    /// One row, no columns: the source of a from-less select.
    SingleRow,
    /// Re-qualifies the input's columns as `alias.attr` (derived tables).
    Qualify { input: Box<PlanNode>, alias: String },
    Filter { input: Box<PlanNode>, predicate: Expr },
    Project { input: Box<PlanNode>, items: Vec<ProjItem> },
    /// Renames all columns positionally; arity-checked at evaluation.
    Rename { input: Box<PlanNode>, columns: Vec<String> },
    Join { left: Box<PlanNode>, right: Box<PlanNode>, on: Vec<(String, String)> },
    Cartesian { left: Box<PlanNode>, right: Box<PlanNode> },
    GroupAggregate { input: Box<PlanNode>, group_by: Vec<String>, aggs: Vec<AggSpec> },
    /// Appends one column: `agg` evaluated over the row's partition.
    WindowAgg { input: Box<PlanNode>, partition_by: Vec<Expr>, agg: AggSpec },
    /// Concatenation of several arms (bag semantics; the evaluation loop
    /// applies the union mode against the recursive relation).
    Union { inputs: Vec<PlanNode> },
}

#[derive(Debug, Clone)]
pub struct LogicalPlan {
    pub recursive_name: String,
    pub columns: Vec<String>,
    pub init: PlanNode,
    /// `(name, plan)` in dependency order; re-evaluated every iteration.
    pub temporaries: Vec<(String, PlanNode)>,
    pub step: PlanNode,
    pub union_mode: UnionMode,
    pub max_recursion: u32,
    pub final_plan: PlanNode,
}

/// Iteration bound when the statement does not write one.
pub const DEFAULT_MAX_RECURSION: u32 = 100;

#[derive(Clone, Copy)]
enum Role<'a> {
    Init,
    Arm,
    Block(&'a str),
    Final,
}

impl Role<'_> {
    fn site(&self) -> String {
        match self {
            Role::Init => "the initial query".to_string(),
            Role::Arm => "a union arm".to_string(),
            Role::Block(name) => format!("computed-by relation `{name}`"),
            Role::Final => "the final query".to_string(),
        }
    }

    fn allows_windows(&self) -> bool {
        matches!(self, Role::Arm | Role::Block(_))
    }
}

pub fn lower(ast: &QueryAst, graph: &DependencyGraph) -> Result<LogicalPlan, LowerError> {
    let init = rename_checked(
        lower_select(&ast.initial_query, Role::Init)?,
        &ast.columns,
        &ast.recursive_name,
        &ast.initial_query,
    )?;

    let mut temporaries = Vec::with_capacity(graph.block_order.len());
    for name in &graph.block_order {
        let block = ast
            .computed_by
            .iter()
            .find(|b| &b.name == name)
            .expect("block order lists declared blocks");
        let plan = rename_checked(
            lower_select(&block.query, Role::Block(name))?,
            &block.columns,
            name,
            &block.query,
        )?;
        temporaries.push((name.clone(), plan));
    }

    let mut arm_plans = Vec::with_capacity(ast.arms.len());
    for (_, arm) in &ast.arms {
        arm_plans.push(rename_checked(
            lower_select(arm, Role::Arm)?,
            &ast.columns,
            &ast.recursive_name,
            arm,
        )?);
    }
    let step = if arm_plans.len() == 1 {
        arm_plans.pop().unwrap()
    } else {
        PlanNode::Union { inputs: arm_plans }
    };

    Ok(LogicalPlan {
        recursive_name: ast.recursive_name.clone(),
        columns: ast.columns.clone(),
        init,
        temporaries,
        step,
        union_mode: ast.arms[0].0.clone(),
        max_recursion: ast.max_recursion.unwrap_or(DEFAULT_MAX_RECURSION),
        final_plan: lower_select(&ast.final_query, Role::Final)?,
    })
}

fn rename_checked(
    plan: PlanNode,
    columns: &[String],
    owner: &str,
    query: &SelectAst,
) -> Result<PlanNode, LowerError> {
    let has_star = query.projections.iter().any(|p| matches!(p, Projection::Star));
    if !has_star && query.projections.len() != columns.len() {
        return Err(LowerError::ColumnCountMismatch {
            name: owner.to_string(),
            declared: columns.len(),
            got: query.projections.len(),
        });
    }
    Ok(PlanNode::Rename { input: Box::new(plan), columns: columns.to_vec() })
}

fn lower_select(sel: &SelectAst, role: Role) -> Result<PlanNode, LowerError> {
    for p in &sel.projections {
        if let Projection::Expr { expr, .. } = p {
            expr.check_functions()?;
        }
    }
    if let Some(w) = &sel.where_clause {
        w.check_functions()?;
        if contains_window(w) {
            return Err(LowerError::WindowNotAllowed { site: "a where clause".into() });
        }
        if contains_aggregate(w) {
            return Err(LowerError::AggregateNotAllowed { site: "a where clause".into() });
        }
    }
    for g in &sel.group_by {
        g.check_functions()?;
        if contains_window(g) {
            return Err(LowerError::WindowNotAllowed { site: "a group-by list".into() });
        }
        if contains_aggregate(g) {
            return Err(LowerError::AggregateNotAllowed { site: "a group-by list".into() });
        }
    }

    let (mut plan, subst) = lower_from(sel, role)?;

    let mut projections: Vec<Projection> = sel
        .projections
        .iter()
        .map(|p| match p {
            Projection::Star => Projection::Star,
            Projection::Expr { expr, alias } => {
                Projection::Expr { expr: apply_subst(expr, &subst), alias: alias.clone() }
            }
        })
        .collect();
    let group_by: Vec<Expr> = sel.group_by.iter().map(|g| apply_subst(g, &subst)).collect();

    // Peel window functions into per-partition aggregates appended to rows.
    let mut windows: Vec<Expr> = Vec::new();
    for p in &projections {
        if let Projection::Expr { expr, .. } = p {
            collect_windows(expr, &mut windows);
        }
    }
    if !windows.is_empty() {
        if !role.allows_windows() {
            return Err(LowerError::WindowNotAllowed { site: role.site() });
        }
        let has_agg = projections.iter().any(|p| {
            matches!(p, Projection::Expr { expr, .. } if contains_aggregate_outside_window(expr))
        });
        if has_agg || !group_by.is_empty() {
            return Err(LowerError::WindowWithAggregates);
        }
        for (i, w) in windows.iter().enumerate() {
            let Expr::Window { func, arg, partition_by } = w else { unreachable!() };
            if contains_aggregate(arg) || contains_window(arg) {
                return Err(LowerError::NestedAggregate);
            }
            plan = PlanNode::WindowAgg {
                input: Box::new(plan),
                partition_by: partition_by.clone(),
                agg: AggSpec::new(agg_op(func)?, (**arg).clone(), &format!("__win{i}")),
            };
        }
        projections = projections
            .into_iter()
            .map(|p| match p {
                Projection::Expr { expr, alias } => {
                    Projection::Expr { expr: replace_windows(expr, &windows), alias }
                }
                star => star,
            })
            .collect();
    }

    // Move aggregate calls into a grouped aggregation.
    let has_agg = projections.iter().any(|p| {
        matches!(p, Projection::Expr { expr, .. } if contains_aggregate(expr))
    });
    if has_agg || !group_by.is_empty() {
        if projections.iter().any(|p| matches!(p, Projection::Star)) {
            return Err(LowerError::StarWithAggregates);
        }
        let group_names = group_by
            .iter()
            .map(|g| match g {
                Expr::Column { qualifier: Some(q), name } => Ok(format!("{q}.{name}")),
                Expr::Column { qualifier: None, name } => Ok(name.clone()),
                _ => Err(LowerError::GroupByNotColumn),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut aggs: Vec<AggSpec> = Vec::new();
        projections = projections
            .into_iter()
            .map(|p| match p {
                Projection::Expr { expr, alias } => Ok(Projection::Expr {
                    expr: rewrite_aggregates(&expr, &mut aggs)?,
                    alias,
                }),
                star => Ok(star),
            })
            .collect::<Result<Vec<_>, LowerError>>()?;
        plan = PlanNode::GroupAggregate { input: Box::new(plan), group_by: group_names, aggs };
    }

    Ok(PlanNode::Project { input: Box::new(plan), items: name_projections(projections) })
}

/// Builds the from-tree with joins extracted from the where-clause, and
/// returns the substitutions for join-dropped columns.
type Subst = Vec<((String, String), (String, String))>;

fn lower_from(sel: &SelectAst, role: Role) -> Result<(PlanNode, Subst), LowerError> {
    if sel.from.is_empty() {
        let mut plan = PlanNode::SingleRow;
        if let Some(pred) = &sel.where_clause {
            plan = PlanNode::Filter { input: Box::new(plan), predicate: pred.clone() };
        }
        return Ok((plan, Vec::new()));
    }

    let mut bindings: Vec<String> = Vec::new();
    let mut items: Vec<(String, PlanNode)> = Vec::new();
    for item in &sel.from {
        let binding = item.binding().to_string();
        if bindings.contains(&binding) {
            return Err(LowerError::DuplicateAlias { name: binding });
        }
        bindings.push(binding.clone());
        let plan = match item {
            FromItem::Table { name, .. } => {
                PlanNode::Scan { table: name.clone(), alias: binding.clone() }
            }
            FromItem::Derived { query, .. } => PlanNode::Qualify {
                input: Box::new(lower_select(query, role)?),
                alias: binding.clone(),
            },
        };
        items.push((binding, plan));
    }

    let mut conjuncts = match &sel.where_clause {
        Some(pred) => flatten_and(pred),
        None => Vec::new(),
    };

    let mut items = items.into_iter();
    let (first_alias, mut plan) = items.next().unwrap();
    let mut in_scope: Vec<String> = vec![first_alias];
    let mut subst: Subst = Vec::new();

    for (alias, right) in items {
        let mut pairs: Vec<((String, String), (String, String))> = Vec::new();
        let mut rest = Vec::new();
        for c in conjuncts.drain(..) {
            let c = apply_subst(&c, &subst);
            if let Some(pair) = join_pair(&c, &in_scope, &alias) {
                pairs.push(pair);
            } else {
                rest.push(c);
            }
        }
        conjuncts = rest;
        if pairs.is_empty() {
            plan = PlanNode::Cartesian { left: Box::new(plan), right: Box::new(right) };
        } else {
            let on = pairs
                .iter()
                .map(|((lq, ln), (rq, rn))| (format!("{lq}.{ln}"), format!("{rq}.{rn}")))
                .collect();
            for (left, dropped) in pairs {
                subst.push((dropped, left));
            }
            plan = PlanNode::Join { left: Box::new(plan), right: Box::new(right), on };
        }
        in_scope.push(alias);
    }

    if !conjuncts.is_empty() {
        let predicate = conjuncts
            .into_iter()
            .reduce(|a, b| a.and(b))
            .expect("non-empty conjunct list");
        plan = PlanNode::Filter { input: Box::new(plan), predicate };
    }
    Ok((plan, subst))
}

/// `left.a = right.b` with `left` already in scope and `right` the side
/// being joined in, in either order; returns `((left side), (right side))`.
fn join_pair(
    c: &Expr,
    in_scope: &[String],
    new_alias: &str,
) -> Option<((String, String), (String, String))> {
    let Expr::Binary { op: BinOp::Eq, lhs, rhs } = c else { return None };
    let Expr::Column { qualifier: Some(lq), name: ln } = &**lhs else { return None };
    let Expr::Column { qualifier: Some(rq), name: rn } = &**rhs else { return None };
    if in_scope.iter().any(|a| a == lq) && rq == new_alias {
        return Some(((lq.clone(), ln.clone()), (rq.clone(), rn.clone())));
    }
    if in_scope.iter().any(|a| a == rq) && lq == new_alias {
        return Some(((rq.clone(), rn.clone()), (lq.clone(), ln.clone())));
    }
    None
}

fn flatten_and(expr: &Expr) -> Vec<Expr> {
    match expr {
        Expr::Binary { op: BinOp::And, lhs, rhs } => {
            let mut out = flatten_and(lhs);
            out.extend(flatten_and(rhs));
            out
        }
        other => vec![other.clone()],
    }
}

fn apply_subst(expr: &Expr, subst: &Subst) -> Expr {
    if subst.is_empty() {
        return expr.clone();
    }
    match expr {
        Expr::Column { qualifier: Some(q), name } => {
            for ((dq, dn), (tq, tn)) in subst {
                if dq == q && dn == name {
                    return Expr::Column { qualifier: Some(tq.clone()), name: tn.clone() };
                }
            }
            expr.clone()
        }
        Expr::Column { .. } | Expr::Int(_) | Expr::Real(_) | Expr::Text(_) => expr.clone(),
        Expr::Neg(e) => Expr::Neg(Box::new(apply_subst(e, subst))),
        Expr::Binary { op, lhs, rhs } => Expr::Binary {
            op: *op,
            lhs: Box::new(apply_subst(lhs, subst)),
            rhs: Box::new(apply_subst(rhs, subst)),
        },
        Expr::Call { name, args } => Expr::Call {
            name: name.clone(),
            args: args.iter().map(|a| apply_subst(a, subst)).collect(),
        },
        Expr::Window { func, arg, partition_by } => Expr::Window {
            func: func.clone(),
            arg: Box::new(apply_subst(arg, subst)),
            partition_by: partition_by.iter().map(|p| apply_subst(p, subst)).collect(),
        },
    }
}

fn contains_window(expr: &Expr) -> bool {
    match expr {
        Expr::Window { .. } => true,
        Expr::Neg(e) => contains_window(e),
        Expr::Binary { lhs, rhs, .. } => contains_window(lhs) || contains_window(rhs),
        Expr::Call { args, .. } => args.iter().any(contains_window),
        _ => false,
    }
}

fn contains_aggregate(expr: &Expr) -> bool {
    match expr {
        Expr::Call { name, args } => {
            is_aggregate_call(name, args.len()) || args.iter().any(contains_aggregate)
        }
        Expr::Neg(e) => contains_aggregate(e),
        Expr::Binary { lhs, rhs, .. } => contains_aggregate(lhs) || contains_aggregate(rhs),
        Expr::Window { arg, .. } => contains_aggregate(arg),
        _ => false,
    }
}

/// Aggregates not wrapped in a window (a window's own aggregate is fine).
fn contains_aggregate_outside_window(expr: &Expr) -> bool {
    match expr {
        Expr::Window { .. } => false,
        Expr::Call { name, args } => {
            is_aggregate_call(name, args.len())
                || args.iter().any(contains_aggregate_outside_window)
        }
        Expr::Neg(e) => contains_aggregate_outside_window(e),
        Expr::Binary { lhs, rhs, .. } => {
            contains_aggregate_outside_window(lhs) || contains_aggregate_outside_window(rhs)
        }
        _ => false,
    }
}

fn collect_windows(expr: &Expr, out: &mut Vec<Expr>) {
    match expr {
        Expr::Window { .. } => {
            if !out.contains(expr) {
                out.push(expr.clone());
            }
        }
        Expr::Neg(e) => collect_windows(e, out),
        Expr::Binary { lhs, rhs, .. } => {
            collect_windows(lhs, out);
            collect_windows(rhs, out);
        }
        Expr::Call { args, .. } => args.iter().for_each(|a| collect_windows(a, out)),
        _ => {}
    }
}

fn replace_windows(expr: Expr, windows: &[Expr]) -> Expr {
    if let Some(i) = windows.iter().position(|w| *w == expr) {
        return col(&format!("__win{i}"));
    }
    match expr {
        Expr::Neg(e) => Expr::Neg(Box::new(replace_windows(*e, windows))),
        Expr::Binary { op, lhs, rhs } => Expr::Binary {
            op,
            lhs: Box::new(replace_windows(*lhs, windows)),
            rhs: Box::new(replace_windows(*rhs, windows)),
        },
        Expr::Call { name, args } => Expr::Call {
            name,
            args: args.into_iter().map(|a| replace_windows(a, windows)).collect(),
        },
        other => other,
    }
}

fn agg_op(name: &str) -> Result<AggOp, LowerError> {
    Ok(match name {
        "sum" => AggOp::Sum,
        "count" => AggOp::Count,
        "avg" => AggOp::Avg,
        "max" => AggOp::Max,
        other => return Err(LowerError::BadWindowFunction { name: other.to_string() }),
    })
}

fn rewrite_aggregates(expr: &Expr, aggs: &mut Vec<AggSpec>) -> Result<Expr, LowerError> {
    match expr {
        Expr::Call { name, args } if is_aggregate_call(name, args.len()) => {
            let arg = &args[0];
            if contains_aggregate(arg) || contains_window(arg) {
                return Err(LowerError::NestedAggregate);
            }
            let op = agg_op(name).expect("aggregate names map to operators");
            if let Some(existing) =
                aggs.iter().find(|a| a.op == op && &a.input == arg)
            {
                return Ok(col(&existing.output));
            }
            let output = format!("__agg{}", aggs.len());
            aggs.push(AggSpec::new(op, arg.clone(), &output));
            Ok(col(&output))
        }
        Expr::Neg(e) => Ok(Expr::Neg(Box::new(rewrite_aggregates(e, aggs)?))),
        Expr::Binary { op, lhs, rhs } => Ok(Expr::Binary {
            op: *op,
            lhs: Box::new(rewrite_aggregates(lhs, aggs)?),
            rhs: Box::new(rewrite_aggregates(rhs, aggs)?),
        }),
        Expr::Call { name, args } => Ok(Expr::Call {
            name: name.clone(),
            args: args
                .iter()
                .map(|a| rewrite_aggregates(a, aggs))
                .collect::<Result<Vec<_>, _>>()?,
        }),
        Expr::Window { .. } => Err(LowerError::WindowWithAggregates),
        other => Ok(other.clone()),
    }
}

fn name_projections(projections: Vec<Projection>) -> Vec<ProjItem> {
    let mut used: Vec<String> = Vec::new();
    projections
        .into_iter()
        .enumerate()
        .map(|(i, p)| match p {
            Projection::Star => ProjItem::Star,
            Projection::Expr { expr, alias } => {
                let candidate = alias.or_else(|| expr.output_name());
                let name = match candidate {
                    Some(n) if !used.contains(&n) => n,
                    _ => format!("col{i}"),
                };
                used.push(name.clone());
                ProjItem::Named { expr, name }
            }
        })
        .collect()
}
