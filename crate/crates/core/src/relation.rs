//! In-memory relations and the relational operators over them.
//!
//! Relations are bags of rows under a typed schema. Operator outputs use
//! deterministic orderings (input order for scans and joins, first
//! appearance for groups), so repeated runs produce identical results;
//! tests that only care about bag semantics compare canonically sorted
//! rows.
//!
//! Vector- and matrix-valued cells take part in ordinary relational
//! operations, which is what lets one row per mixture component carry a
//! whole mean vector and covariance matrix. The sparse-matrix joins at the
//! bottom of this module instead operate on coordinate-form relations
//! (`(i, j, value)` rows), where absent pairs are implicit zeros: a
//! multiplication that would have produced zero is simply skipped.

use crate::expr::{Expr, ExprError};
use crate::types::{AttrType, Schema, Value};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: expected {expected} in column `{column}`, got {got}")]
    CellType { row: usize, column: String, expected: AttrType, got: AttrType },
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("duplicate key {key} in `{side}` operand of union-by-update")]
    KeyViolation { key: String, side: &'static str },
    #[error("aggregate `{op}` cannot accept {got}")]
    BadAggregate { op: &'static str, got: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Aggregate operators for [`Relation::group_aggregate`].
///
/// `Sum` accepts integers, reals, vectors, or matrices (the cells of one
/// group must agree in shape); `SumVec`/`SumMat` are shape-asserting
/// variants for callers that want the mismatch caught by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggOp {
    Sum,
    Count,
    Max,
    Avg,
    SumVec,
    SumMat,
}

/// One aggregate column: `op` applied to `input` evaluated per row,
/// projected under `output`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggSpec {
    pub op: AggOp,
    pub input: Expr,
    pub output: String,
}

impl AggSpec {
    pub fn new(op: AggOp, input: Expr, output: &str) -> Self {
        AggSpec { op, input, output: output.to_string() }
    }
}

#[derive(Clone, Debug)]
pub struct Relation {
    schema: Schema,
    rows: Vec<Vec<Value>>,
    key: Option<Vec<String>>,
}

impl Relation {
    /// Builds a relation, checking every cell against the schema. Integer
    /// cells destined for real columns are promoted on the way in, so a
    /// stored column is homogeneous.
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self, RelationError> {
        let mut checked = Vec::with_capacity(rows.len());
        for (ri, mut row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(RelationError::Schema(format!(
                    "row {ri} has {} cells, schema has {} attributes",
                    row.len(),
                    schema.len()
                )));
            }
            for (ci, cell) in row.iter_mut().enumerate() {
                let expected = schema.attr_type(ci);
                let got = cell.type_of();
                if expected == AttrType::Real && got == AttrType::Int {
                    *cell = Value::Real(cell.as_f64().unwrap());
                } else if expected != got {
                    return Err(RelationError::CellType {
                        row: ri,
                        column: schema.name(ci).to_string(),
                        expected,
                        got,
                    });
                }
                if cell.has_non_finite() {
                    return Err(RelationError::NonFinite {
                        row: ri,
                        column: schema.name(ci).to_string(),
                    });
                }
            }
            checked.push(row);
        }
        Ok(Relation { schema, rows: checked, key: None })
    }

    pub fn empty(schema: Schema) -> Self {
        Relation { schema, rows: Vec::new(), key: None }
    }

    /// Renames the attributes positionally without re-validating cells
    /// (types are untouched, so validity is preserved).
    pub(crate) fn renamed(self, names: Vec<String>) -> Result<Relation, RelationError> {
        if names.len() != self.schema.len() {
            return Err(RelationError::Schema(format!(
                "cannot rename {} attributes to {} names",
                self.schema.len(),
                names.len()
            )));
        }
        let attrs = names
            .into_iter()
            .zip(self.schema.attrs())
            .map(|(n, (_, ty))| (n, *ty))
            .collect();
        let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
        Ok(Relation { schema, rows: self.rows, key: None })
    }

    /// Declares `key` as a key of this relation and verifies uniqueness.
    pub fn with_key(mut self, key: &[&str]) -> Result<Self, RelationError> {
        let idxs = resolve_attrs(&self.schema, &key.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
        check_key_unique(&self.rows, &idxs, &self.schema, "keyed relation")?;
        self.key = Some(key.iter().map(|s| s.to_string()).collect());
        Ok(self)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn key(&self) -> Option<&[String]> {
        self.key.as_deref()
    }

    /// Rows sorted by the total cell order; two relations are bag-equal iff
    /// their canonical row lists are equal (floats bit-for-bit).
    pub fn canonical_rows(&self) -> Vec<&Vec<Value>> {
        let mut refs: Vec<&Vec<Value>> = self.rows.iter().collect();
        refs.sort_by(|a, b| cmp_rows(a, b));
        refs
    }

    pub fn bag_equal(&self, other: &Relation) -> bool {
        self.schema == other.schema
            && self.len() == other.len()
            && self
                .canonical_rows()
                .iter()
                .zip(other.canonical_rows())
                .all(|(a, b)| *a == b)
    }

    /// σ: rows satisfying `predicate`, in input order.
    pub fn select(&self, predicate: &Expr) -> Result<Relation, RelationError> {
        let bound = predicate.bind(&self.schema)?;
        let mut rows = Vec::new();
        for row in &self.rows {
            if bound.eval_predicate(row)? {
                rows.push(row.clone());
            }
        }
        Ok(Relation { schema: self.schema.clone(), rows, key: None })
    }

    /// π: one output column per `(expression, name)` pair. The output
    /// schema is inferred statically, so projecting an empty relation still
    /// yields fully typed columns.
    pub fn project(&self, columns: &[(Expr, String)]) -> Result<Relation, RelationError> {
        let mut attrs = Vec::with_capacity(columns.len());
        let mut bound = Vec::with_capacity(columns.len());
        for (expr, name) in columns {
            attrs.push((name.clone(), expr.infer_type(&self.schema)?));
            bound.push(expr.bind(&self.schema)?);
        }
        let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
        let mut rows = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let out = bound.iter().map(|b| b.eval(row)).collect::<Result<Vec<_>, _>>()?;
            rows.push(out);
        }
        Ok(Relation { schema, rows, key: None })
    }

    /// Equi-join on `(left attr, right attr)` pairs. The output carries all
    /// left attributes followed by the right attributes minus the join
    /// keys (their values duplicate the left side); remaining right
    /// attributes whose names collide are qualified with `right.`.
    pub fn join(&self, other: &Relation, on: &[(String, String)]) -> Result<Relation, RelationError> {
        let left_keys = resolve_attrs(&self.schema, &on.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>())?;
        let right_keys =
            resolve_attrs(&other.schema, &on.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;

        let mut attrs: Vec<(String, AttrType)> = self.schema.attrs().to_vec();
        let mut right_carry = Vec::new();
        for (ci, (name, ty)) in other.schema.attrs().iter().enumerate() {
            if right_keys.contains(&ci) {
                continue;
            }
            let out_name = if self.schema.index_of(name).is_some() {
                format!("right.{name}")
            } else {
                name.clone()
            };
            attrs.push((out_name, *ty));
            right_carry.push(ci);
        }
        let schema = Schema::new(attrs).map_err(RelationError::Schema)?;

        let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
        for (ri, row) in other.rows.iter().enumerate() {
            let key: Vec<Value> = right_keys.iter().map(|&i| row[i].clone()).collect();
            index.entry(key).or_default().push(ri);
        }

        let mut rows = Vec::new();
        for lrow in &self.rows {
            let key: Vec<Value> = left_keys.iter().map(|&i| lrow[i].clone()).collect();
            if let Some(matches) = index.get(&key) {
                for &ri in matches {
                    let mut out = lrow.clone();
                    out.extend(right_carry.iter().map(|&ci| other.rows[ri][ci].clone()));
                    rows.push(out);
                }
            }
        }
        Ok(Relation { schema, rows, key: None })
    }

    /// ×: every pairing of a left row with a right row, in row-major order.
    /// Colliding right attribute names are qualified with `right.`.
    pub fn cartesian(&self, other: &Relation) -> Result<Relation, RelationError> {
        let mut attrs: Vec<(String, AttrType)> = self.schema.attrs().to_vec();
        for (name, ty) in other.schema.attrs() {
            let out_name = if self.schema.index_of(name).is_some() {
                format!("right.{name}")
            } else {
                name.clone()
            };
            attrs.push((out_name, *ty));
        }
        let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
        let mut rows = Vec::with_capacity(self.len() * other.len());
        for lrow in &self.rows {
            for rrow in &other.rows {
                let mut out = lrow.clone();
                out.extend(rrow.iter().cloned());
                rows.push(out);
            }
        }
        Ok(Relation { schema, rows, key: None })
    }

    /// γ: one output row per distinct value of `group_by`, in first
    /// appearance order, carrying the group key columns and one aggregate
    /// column per [`AggSpec`]. No rows are emitted for absent groups, so an
    /// aggregate never sees an empty input; grouping by nothing aggregates
    /// the whole relation (and yields no row when it is empty).
    pub fn group_aggregate(
        &self,
        group_by: &[String],
        aggs: &[AggSpec],
    ) -> Result<Relation, RelationError> {
        let key_idx = resolve_attrs(&self.schema, group_by)?;
        let bound = aggs
            .iter()
            .map(|a| a.input.bind(&self.schema))
            .collect::<Result<Vec<_>, _>>()?;

        let mut groups: HashMap<Vec<Value>, usize> = HashMap::new();
        let mut order: Vec<(Vec<Value>, Vec<Accumulator>)> = Vec::new();
        for row in &self.rows {
            let key: Vec<Value> = key_idx.iter().map(|&i| row[i].clone()).collect();
            let slot = match groups.get(&key) {
                Some(&s) => s,
                None => {
                    groups.insert(key.clone(), order.len());
                    order.push((key, aggs.iter().map(|a| Accumulator::new(a.op)).collect()));
                    order.len() - 1
                }
            };
            let accs = &mut order[slot].1;
            for (acc, expr) in accs.iter_mut().zip(&bound) {
                acc.feed(expr.eval(row)?)?;
            }
        }

        let mut attrs: Vec<(String, AttrType)> = key_idx
            .iter()
            .map(|&i| (self.schema.name(i).to_string(), self.schema.attr_type(i)))
            .collect();
        // Aggregate output types come from the first group when the input
        // is non-empty; otherwise fall back to static inference.
        for (spec, _) in aggs.iter().zip(0..) {
            let ty = if let Some((_, accs)) = order.first() {
                accs[aggs.iter().position(|a| std::ptr::eq(a, spec)).unwrap()].output_type()
            } else {
                static_agg_type(spec, &self.schema)?
            };
            attrs.push((spec.output.clone(), ty));
        }
        let schema = Schema::new(attrs).map_err(RelationError::Schema)?;

        let mut rows = Vec::with_capacity(order.len());
        for (key, accs) in order {
            let mut row = key;
            for acc in accs {
                row.push(acc.finish()?);
            }
            rows.push(row);
        }
        Relation::new(schema, rows)
    }

    /// ⊎ (union by update): rows of `self` whose key does not appear in
    /// `update` survive, then every row of `update` is appended. Both
    /// operands must be key-unique on `key`, which makes the result
    /// key-unique too.
    pub fn union_by_update(
        &self,
        update: &Relation,
        key: &[String],
    ) -> Result<Relation, RelationError> {
        if self.schema != update.schema {
            return Err(RelationError::Schema(format!(
                "union-by-update operands disagree: {:?} vs {:?}",
                self.schema.attrs(),
                update.schema.attrs()
            )));
        }
        let key_idx = resolve_attrs(&self.schema, key)?;
        check_key_unique(&self.rows, &key_idx, &self.schema, "current")?;
        check_key_unique(&update.rows, &key_idx, &update.schema, "update")?;

        let updated: std::collections::HashSet<Vec<Value>> = update
            .rows
            .iter()
            .map(|row| key_idx.iter().map(|&i| row[i].clone()).collect())
            .collect();

        let mut rows = Vec::with_capacity(self.len() + update.len());
        for row in &self.rows {
            let k: Vec<Value> = key_idx.iter().map(|&i| row[i].clone()).collect();
            if !updated.contains(&k) {
                rows.push(row.clone());
            }
        }
        rows.extend(update.rows.iter().cloned());
        Ok(Relation {
            schema: self.schema.clone(),
            rows,
            key: Some(key.to_vec()),
        })
    }

    /// Bag union with duplicate elimination (set semantics): keeps the
    /// first occurrence of each distinct row, `self` first.
    pub fn union_distinct(&self, other: &Relation) -> Result<Relation, RelationError> {
        if self.schema != other.schema {
            return Err(RelationError::Schema(format!(
                "union operands disagree: {:?} vs {:?}",
                self.schema.attrs(),
                other.schema.attrs()
            )));
        }
        let mut seen: std::collections::HashSet<&Vec<Value>> = std::collections::HashSet::new();
        let mut rows = Vec::new();
        for row in self.rows.iter().chain(other.rows.iter()) {
            if seen.insert(row) {
                rows.push(row.clone());
            }
        }
        Ok(Relation { schema: self.schema.clone(), rows, key: None })
    }

    /// Appends rows of `other` (bag semantics, schemas must match).
    pub fn concat(&self, other: &Relation) -> Result<Relation, RelationError> {
        if self.schema != other.schema {
            return Err(RelationError::Schema(format!(
                "concat operands disagree: {:?} vs {:?}",
                self.schema.attrs(),
                other.schema.attrs()
            )));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Relation { schema: self.schema.clone(), rows, key: self.key.clone() })
    }
}

fn cmp_rows(a: &[Value], b: &[Value]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.cmp_total(y);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn resolve_attrs(schema: &Schema, names: &[String]) -> Result<Vec<usize>, RelationError> {
    names
        .iter()
        .map(|n| schema.resolve(None, n).map_err(RelationError::Schema))
        .collect()
}

fn check_key_unique(
    rows: &[Vec<Value>],
    key_idx: &[usize],
    schema: &Schema,
    side: &'static str,
) -> Result<(), RelationError> {
    let mut seen: std::collections::HashSet<Vec<Value>> = std::collections::HashSet::new();
    for row in rows {
        let k: Vec<Value> = key_idx.iter().map(|&i| row[i].clone()).collect();
        if !seen.insert(k.clone()) {
            let shown = k
                .iter()
                .zip(key_idx)
                .map(|(v, &i)| format!("{}={}", schema.name(i), v))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(RelationError::KeyViolation { key: format!("({shown})"), side });
        }
    }
    Ok(())
}

pub(crate) fn static_agg_type(spec: &AggSpec, schema: &Schema) -> Result<AttrType, RelationError> {
    let input = spec.input.infer_type(schema)?;
    Ok(match spec.op {
        AggOp::Count => AttrType::Int,
        AggOp::Avg => AttrType::Real,
        AggOp::Sum | AggOp::Max | AggOp::SumVec | AggOp::SumMat => input,
    })
}

pub(crate) enum Accumulator {
    Sum(Option<Value>, bool, bool), // (state, require_vec, require_mat)
    Count(i64),
    Max(Option<Value>),
    Avg(f64, i64),
}

impl Accumulator {
    pub(crate) fn new(op: AggOp) -> Self {
        match op {
            AggOp::Sum => Accumulator::Sum(None, false, false),
            AggOp::SumVec => Accumulator::Sum(None, true, false),
            AggOp::SumMat => Accumulator::Sum(None, false, true),
            AggOp::Count => Accumulator::Count(0),
            AggOp::Max => Accumulator::Max(None),
            AggOp::Avg => Accumulator::Avg(0.0, 0),
        }
    }

    pub(crate) fn feed(&mut self, v: Value) -> Result<(), RelationError> {
        match self {
            Accumulator::Count(n) => {
                *n += 1;
                Ok(())
            }
            Accumulator::Avg(sum, n) => match v.as_f64() {
                Some(x) => {
                    *sum += x;
                    *n += 1;
                    Ok(())
                }
                None => Err(RelationError::BadAggregate {
                    op: "avg",
                    got: v.type_of().to_string(),
                }),
            },
            Accumulator::Max(state) => match (&state, &v) {
                (_, Value::Int(_) | Value::Real(_)) => {
                    let replace = match state {
                        None => true,
                        Some(cur) => v.as_f64().unwrap() > cur.as_f64().unwrap(),
                    };
                    if replace {
                        *state = Some(v);
                    }
                    Ok(())
                }
                _ => Err(RelationError::BadAggregate {
                    op: "max",
                    got: v.type_of().to_string(),
                }),
            },
            Accumulator::Sum(state, want_vec, want_mat) => {
                if *want_vec && !matches!(v, Value::Vector(_)) {
                    return Err(RelationError::BadAggregate {
                        op: "sum(vector)",
                        got: v.type_of().to_string(),
                    });
                }
                if *want_mat && !matches!(v, Value::Matrix(_)) {
                    return Err(RelationError::BadAggregate {
                        op: "sum(matrix)",
                        got: v.type_of().to_string(),
                    });
                }
                match (state.take(), v) {
                    (None, v) => {
                        if matches!(v, Value::Text(_)) {
                            return Err(RelationError::BadAggregate {
                                op: "sum",
                                got: "text".into(),
                            });
                        }
                        *state = Some(v);
                        Ok(())
                    }
                    (Some(Value::Int(a)), Value::Int(b)) => {
                        *state = Some(Value::Int(a.checked_add(b).ok_or(
                            RelationError::BadAggregate { op: "sum", got: "integer overflow".into() },
                        )?));
                        Ok(())
                    }
                    (Some(acc), v) => match (acc.as_f64(), v.as_f64()) {
                        (Some(a), Some(b)) => {
                            *state = Some(Value::Real(a + b));
                            Ok(())
                        }
                        _ => match (acc, v) {
                            (Value::Vector(mut a), Value::Vector(b)) => {
                                if a.len() != b.len() {
                                    return Err(RelationError::BadAggregate {
                                        op: "sum",
                                        got: format!(
                                            "vectors of lengths {} and {}",
                                            a.len(),
                                            b.len()
                                        ),
                                    });
                                }
                                for (x, y) in a.iter_mut().zip(&b) {
                                    *x += y;
                                }
                                *state = Some(Value::Vector(a));
                                Ok(())
                            }
                            (Value::Matrix(a), Value::Matrix(b)) => {
                                if a.dim() != b.dim() {
                                    return Err(RelationError::BadAggregate {
                                        op: "sum",
                                        got: format!(
                                            "matrices of dimensions {} and {}",
                                            a.dim(),
                                            b.dim()
                                        ),
                                    });
                                }
                                *state = Some(Value::Matrix(a.add(&b)));
                                Ok(())
                            }
                            (acc, v) => Err(RelationError::BadAggregate {
                                op: "sum",
                                got: format!("{} then {}", acc.type_of(), v.type_of()),
                            }),
                        },
                    },
                }
            }
        }
    }

    pub(crate) fn output_type(&self) -> AttrType {
        match self {
            Accumulator::Count(_) => AttrType::Int,
            Accumulator::Avg(..) => AttrType::Real,
            Accumulator::Max(state) | Accumulator::Sum(state, ..) => {
                state.as_ref().map(|v| v.type_of()).unwrap_or(AttrType::Real)
            }
        }
    }

    pub(crate) fn finish(self) -> Result<Value, RelationError> {
        match self {
            Accumulator::Count(n) => Ok(Value::Int(n)),
            Accumulator::Avg(sum, n) => Ok(Value::Real(sum / n as f64)),
            Accumulator::Max(state) | Accumulator::Sum(state, ..) => {
                // Groups only exist for rows that fed them.
                Ok(state.expect("aggregate over a non-empty group"))
            }
        }
    }
}

/// Scalar combiner for the sparse joins (the ⊙ of a (⊕, ⊙) pair).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarOp {
    Mul,
    Add,
}

impl ScalarOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ScalarOp::Mul => a * b,
            ScalarOp::Add => a + b,
        }
    }
}

fn coord_columns(rel: &Relation, want: usize, what: &str) -> Result<(), RelationError> {
    if rel.schema().len() != want {
        return Err(RelationError::Schema(format!(
            "{what} must have exactly {want} columns, got {}",
            rel.schema().len()
        )));
    }
    for i in 0..want - 1 {
        if rel.schema().attr_type(i) != AttrType::Int {
            return Err(RelationError::Schema(format!(
                "{what} column `{}` must be an integer index",
                rel.schema().name(i)
            )));
        }
    }
    match rel.schema().attr_type(want - 1) {
        AttrType::Int | AttrType::Real => Ok(()),
        other => Err(RelationError::Schema(format!(
            "{what} value column `{}` must be scalar, got {other}",
            rel.schema().name(want - 1)
        ))),
    }
}

fn scalar_cell(v: &Value) -> f64 {
    v.as_f64().expect("coordinate relations hold scalar values")
}

fn finish_groups(
    attrs: Vec<(String, AttrType)>,
    order: Vec<(Vec<Value>, f64)>,
) -> Result<Relation, RelationError> {
    let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
    let rows = order
        .into_iter()
        .map(|(mut key, acc)| {
            key.push(Value::Real(acc));
            key
        })
        .collect();
    Relation::new(schema, rows)
}

fn fold_sparse(
    plus: AggOp,
    groups: &mut HashMap<Vec<Value>, usize>,
    order: &mut Vec<(Vec<Value>, f64)>,
    key: Vec<Value>,
    val: f64,
) -> Result<(), RelationError> {
    match groups.get(&key) {
        Some(&slot) => {
            let acc = &mut order[slot].1;
            match plus {
                AggOp::Sum | AggOp::SumVec | AggOp::SumMat => *acc += val,
                AggOp::Max => *acc = acc.max(val),
                other => {
                    return Err(RelationError::BadAggregate {
                        op: "sparse join",
                        got: format!("{other:?}"),
                    })
                }
            }
        }
        None => {
            if !matches!(plus, AggOp::Sum | AggOp::SumVec | AggOp::SumMat | AggOp::Max) {
                return Err(RelationError::BadAggregate {
                    op: "sparse join",
                    got: format!("{plus:?}"),
                });
            }
            groups.insert(key.clone(), order.len());
            order.push((key, val));
        }
    }
    Ok(())
}

/// Matrix–vector join: `e` is a sparse matrix `(i, j, value)`, `v` a sparse
/// vector `(j, value)`. Matching on `e.j = v.j`, combines values with
/// `times` and folds per `i` with `plus`, yielding `(i, val)` — the sparse
/// matrix-vector product for `(Sum, Mul)`.
pub fn mv_join(
    e: &Relation,
    v: &Relation,
    plus: AggOp,
    times: ScalarOp,
) -> Result<Relation, RelationError> {
    coord_columns(e, 3, "matrix operand")?;
    coord_columns(v, 2, "vector operand")?;
    let mut index: HashMap<Value, Vec<f64>> = HashMap::new();
    for row in v.rows() {
        index.entry(row[0].clone()).or_default().push(scalar_cell(&row[1]));
    }
    let mut groups = HashMap::new();
    let mut order = Vec::new();
    for row in e.rows() {
        if let Some(vals) = index.get(&row[1]) {
            for &x in vals {
                let combined = times.apply(scalar_cell(&row[2]), x);
                fold_sparse(plus, &mut groups, &mut order, vec![row[0].clone()], combined)?;
            }
        }
    }
    finish_groups(
        vec![(e.schema().name(0).to_string(), AttrType::Int), ("val".into(), AttrType::Real)],
        order,
    )
}

/// Matrix–matrix join: matches `a.j = b.i`, combines with `times`, folds
/// per `(a.i, b.j)` with `plus` — the sparse matrix product for
/// `(Sum, Mul)`. Output is `(i, j, val)`.
pub fn mm_join(
    a: &Relation,
    b: &Relation,
    plus: AggOp,
    times: ScalarOp,
) -> Result<Relation, RelationError> {
    coord_columns(a, 3, "left matrix operand")?;
    coord_columns(b, 3, "right matrix operand")?;
    let mut index: HashMap<Value, Vec<(Value, f64)>> = HashMap::new();
    for row in b.rows() {
        index
            .entry(row[0].clone())
            .or_default()
            .push((row[1].clone(), scalar_cell(&row[2])));
    }
    let mut groups = HashMap::new();
    let mut order = Vec::new();
    for row in a.rows() {
        if let Some(matches) = index.get(&row[1]) {
            for (j, x) in matches {
                let combined = times.apply(scalar_cell(&row[2]), *x);
                fold_sparse(
                    plus,
                    &mut groups,
                    &mut order,
                    vec![row[0].clone(), j.clone()],
                    combined,
                )?;
            }
        }
    }
    finish_groups(
        vec![
            (a.schema().name(0).to_string(), AttrType::Int),
            (b.schema().name(1).to_string(), AttrType::Int),
            ("val".into(), AttrType::Real),
        ],
        order,
    )
}

/// Element-wise join: matches on both indices, combines with `times`, folds
/// per row index with `plus` — for `(Sum, Mul)` this is the row sum of the
/// Hadamard product. Output is `(i, val)`.
pub fn elementwise_join(
    a: &Relation,
    b: &Relation,
    plus: AggOp,
    times: ScalarOp,
) -> Result<Relation, RelationError> {
    coord_columns(a, 3, "left matrix operand")?;
    coord_columns(b, 3, "right matrix operand")?;
    let mut index: HashMap<(Value, Value), Vec<f64>> = HashMap::new();
    for row in b.rows() {
        index
            .entry((row[0].clone(), row[1].clone()))
            .or_default()
            .push(scalar_cell(&row[2]));
    }
    let mut groups = HashMap::new();
    let mut order = Vec::new();
    for row in a.rows() {
        if let Some(vals) = index.get(&(row[0].clone(), row[1].clone())) {
            for &x in vals {
                let combined = times.apply(scalar_cell(&row[2]), x);
                fold_sparse(plus, &mut groups, &mut order, vec![row[0].clone()], combined)?;
            }
        }
    }
    finish_groups(
        vec![(a.schema().name(0).to_string(), AttrType::Int), ("val".into(), AttrType::Real)],
        order,
    )
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut widths: Vec<usize> =
            self.schema.attrs().iter().map(|(n, _)| n.len()).collect();
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let s = v.to_string();
                        widths[i] = widths[i].max(s.len());
                        s
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = self
            .schema
            .attrs()
            .iter()
            .enumerate()
            .map(|(i, (n, _))| format!("{:w$}", n, w = widths[i]))
            .collect();
        writeln!(f, "{}", names.join("  "))?;
        for row in rendered {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{:w$}", s, w = widths[i]))
                .collect();
            writeln!(f, "{}", cells.join("  "))?;
        }
        Ok(())
    }
}
