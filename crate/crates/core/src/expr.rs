//! Row expressions: the scalar/vector/matrix expression language used by
//! relational operators and by the SQL dialect.
//!
//! Expressions are bound against a schema once per operator invocation
//! (resolving column names to indices), then evaluated per row. Binding and
//! evaluation are split so that a scan over many rows pays name resolution
//! once. Static type inference propagates output schemas even for empty
//! relations.
//!
//! Aggregate calls (`sum`, `count`, `avg`, single-argument `max`) and window
//! expressions may appear inside an [`Expr`] tree; the SQL lowering rewrites
//! them into grouped plans before any row-level binding happens, so binding
//! one directly is an error.

use crate::kernels::{self, KernelError};
use crate::types::{AttrType, Matrix, Schema, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("{0}")]
    Column(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` does not take {got} argument(s)")]
    WrongArity { name: String, got: usize },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("non-finite result from {0}")]
    NonFinite(String),
    #[error("aggregate `{0}` is not valid in a row-level expression")]
    AggregateInScalarContext(String),
    #[error("window expression is not valid in a row-level expression")]
    WindowInScalarContext,
    #[error("integer overflow in `{0}`")]
    IntOverflow(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

/// Names of the aggregate functions recognized in grouped selects.
pub const AGGREGATE_NAMES: [&str; 4] = ["sum", "count", "avg", "max"];

/// True for `sum`/`count`/`avg` always, and for `max` only in single-argument
/// form (two-argument `max` is the scalar maximum).
pub fn is_aggregate_call(name: &str, arg_count: usize) -> bool {
    match name {
        "sum" | "count" | "avg" => true,
        "max" => arg_count == 1,
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Column { qualifier: Option<String>, name: String },
    Int(i64),
    Real(f64),
    Text(String),
    Neg(Box<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { name: String, args: Vec<Expr> },
    /// `func(arg) over (partition by cols)`; rewritten away by the lowering.
    Window { func: String, arg: Box<Expr>, partition_by: Vec<Expr> },
}

pub fn col(name: &str) -> Expr {
    Expr::Column { qualifier: None, name: name.to_string() }
}

pub fn qcol(qualifier: &str, name: &str) -> Expr {
    Expr::Column { qualifier: Some(qualifier.to_string()), name: name.to_string() }
}

pub fn lit_int(v: i64) -> Expr {
    Expr::Int(v)
}

pub fn lit(v: f64) -> Expr {
    Expr::Real(v)
}

pub fn call(name: &str, args: Vec<Expr>) -> Expr {
    Expr::Call { name: name.to_string(), args }
}

impl Expr {
    fn bin(self, op: BinOp, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(self), rhs: Box::new(rhs) }
    }

    pub fn add(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Add, rhs)
    }
    pub fn sub(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Sub, rhs)
    }
    pub fn mul(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Mul, rhs)
    }
    pub fn div(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Div, rhs)
    }
    pub fn eq(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Eq, rhs)
    }
    pub fn ne(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Ne, rhs)
    }
    pub fn lt(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Lt, rhs)
    }
    pub fn le(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Le, rhs)
    }
    pub fn gt(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Gt, rhs)
    }
    pub fn ge(self, rhs: Expr) -> Expr {
        self.bin(BinOp::Ge, rhs)
    }
    pub fn and(self, rhs: Expr) -> Expr {
        self.bin(BinOp::And, rhs)
    }
    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    /// A display name for an unaliased projection: bare column names project
    /// under their own name, anything else under a positional placeholder
    /// chosen by the caller.
    pub fn output_name(&self) -> Option<String> {
        match self {
            Expr::Column { name, .. } => Some(name.clone()),
            _ => None,
        }
    }

    /// Resolves column references against `schema` and checks function
    /// names and arities, producing an evaluable form.
    pub fn bind(&self, schema: &Schema) -> Result<BoundExpr, ExprError> {
        match self {
            Expr::Column { qualifier, name } => {
                let idx = schema
                    .resolve(qualifier.as_deref(), name)
                    .map_err(ExprError::Column)?;
                Ok(BoundExpr::Column(idx))
            }
            Expr::Int(v) => Ok(BoundExpr::Literal(Value::Int(*v))),
            Expr::Real(v) => Ok(BoundExpr::Literal(Value::Real(*v))),
            Expr::Text(v) => Ok(BoundExpr::Literal(Value::Text(v.clone()))),
            Expr::Neg(e) => Ok(BoundExpr::Neg(Box::new(e.bind(schema)?))),
            Expr::Binary { op, lhs, rhs } => Ok(BoundExpr::Binary {
                op: *op,
                lhs: Box::new(lhs.bind(schema)?),
                rhs: Box::new(rhs.bind(schema)?),
            }),
            Expr::Call { name, args } => {
                if is_aggregate_call(name, args.len()) {
                    return Err(ExprError::AggregateInScalarContext(name.clone()));
                }
                let func = lookup_function(name, args.len())?;
                let bound =
                    args.iter().map(|a| a.bind(schema)).collect::<Result<Vec<_>, _>>()?;
                Ok(BoundExpr::Call { func, args: bound })
            }
            Expr::Window { .. } => Err(ExprError::WindowInScalarContext),
        }
    }

    /// Static result type over `schema`; drives output-schema propagation.
    pub fn infer_type(&self, schema: &Schema) -> Result<AttrType, ExprError> {
        match self {
            Expr::Column { qualifier, name } => {
                let idx = schema
                    .resolve(qualifier.as_deref(), name)
                    .map_err(ExprError::Column)?;
                Ok(schema.attr_type(idx))
            }
            Expr::Int(_) => Ok(AttrType::Int),
            Expr::Real(_) => Ok(AttrType::Real),
            Expr::Text(_) => Ok(AttrType::Text),
            Expr::Neg(e) => match e.infer_type(schema)? {
                AttrType::Text => {
                    Err(ExprError::TypeMismatch("cannot negate a text value".into()))
                }
                t => Ok(t),
            },
            Expr::Binary { op, lhs, rhs } => {
                infer_binary(*op, lhs.infer_type(schema)?, rhs.infer_type(schema)?)
            }
            Expr::Call { name, args } => {
                if is_aggregate_call(name, args.len()) {
                    return Err(ExprError::AggregateInScalarContext(name.clone()));
                }
                let func = lookup_function(name, args.len())?;
                let arg_types = args
                    .iter()
                    .map(|a| a.infer_type(schema))
                    .collect::<Result<Vec<_>, _>>()?;
                func.infer(&arg_types)
            }
            Expr::Window { .. } => Err(ExprError::WindowInScalarContext),
        }
    }

    /// Walks the tree checking that every called function exists with a
    /// valid arity; used by the lowering for static diagnostics. Aggregates
    /// and windows are accepted here (`in_agg_position` handles their
    /// arguments).
    pub fn check_functions(&self) -> Result<(), ExprError> {
        match self {
            Expr::Column { .. } | Expr::Int(_) | Expr::Real(_) | Expr::Text(_) => Ok(()),
            Expr::Neg(e) => e.check_functions(),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.check_functions()?;
                rhs.check_functions()
            }
            Expr::Call { name, args } => {
                if !is_aggregate_call(name, args.len()) {
                    lookup_function(name, args.len())?;
                }
                for a in args {
                    a.check_functions()?;
                }
                Ok(())
            }
            Expr::Window { func, arg, .. } => {
                if !is_aggregate_call(func, 1) {
                    return Err(ExprError::UnknownFunction(format!("{func} (window)")));
                }
                arg.check_functions()
            }
        }
    }
}

/// An expression with column references resolved to indices.
#[derive(Clone, Debug)]
pub enum BoundExpr {
    Column(usize),
    Literal(Value),
    Neg(Box<BoundExpr>),
    Binary { op: BinOp, lhs: Box<BoundExpr>, rhs: Box<BoundExpr> },
    Call { func: &'static FunctionSig, args: Vec<BoundExpr> },
}

impl BoundExpr {
    pub fn eval(&self, row: &[Value]) -> Result<Value, ExprError> {
        match self {
            BoundExpr::Column(idx) => Ok(row[*idx].clone()),
            BoundExpr::Literal(v) => Ok(v.clone()),
            BoundExpr::Neg(e) => match e.eval(row)? {
                Value::Int(i) => i
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| ExprError::IntOverflow("-".into())),
                Value::Real(r) => Ok(Value::Real(-r)),
                Value::Vector(v) => Ok(Value::Vector(v.into_iter().map(|x| -x).collect())),
                Value::Matrix(m) => Ok(Value::Matrix(m.scaled(-1.0))),
                Value::Text(_) => {
                    Err(ExprError::TypeMismatch("cannot negate a text value".into()))
                }
            },
            BoundExpr::Binary { op, lhs, rhs } => {
                if *op == BinOp::And {
                    // Short-circuit: a false left side hides errors on the right.
                    return if truthy(&lhs.eval(row)?)? {
                        Ok(bool_value(truthy(&rhs.eval(row)?)?))
                    } else {
                        Ok(bool_value(false))
                    };
                }
                let l = lhs.eval(row)?;
                let r = rhs.eval(row)?;
                let out = eval_binary(*op, l, r)?;
                check_finite(&out, op.symbol())?;
                Ok(out)
            }
            BoundExpr::Call { func, args } => {
                let vals =
                    args.iter().map(|a| a.eval(row)).collect::<Result<Vec<_>, _>>()?;
                let out = (func.eval)(&vals)?;
                check_finite(&out, func.name)?;
                Ok(out)
            }
        }
    }

    /// Evaluates as a predicate: integers are truthy when non-zero (the
    /// comparison operators produce 0/1), anything else is a type error.
    pub fn eval_predicate(&self, row: &[Value]) -> Result<bool, ExprError> {
        truthy(&self.eval(row)?)
    }
}

fn truthy(v: &Value) -> Result<bool, ExprError> {
    match v {
        Value::Int(i) => Ok(*i != 0),
        other => Err(ExprError::TypeMismatch(format!(
            "predicate must be boolean-valued, got {}",
            other.type_of()
        ))),
    }
}

fn bool_value(b: bool) -> Value {
    Value::Int(b as i64)
}

fn check_finite(v: &Value, context: &str) -> Result<(), ExprError> {
    if v.has_non_finite() {
        Err(ExprError::NonFinite(format!("`{context}`")))
    } else {
        Ok(())
    }
}

fn numeric_pair(op: BinOp, l: &Value, r: &Value) -> Result<(f64, f64), ExprError> {
    match (l.as_f64(), r.as_f64()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(ExprError::TypeMismatch(format!(
            "`{}` expects numeric operands, got {} and {}",
            op.symbol(),
            l.type_of(),
            r.type_of()
        ))),
    }
}

fn eval_binary(op: BinOp, l: Value, r: Value) -> Result<Value, ExprError> {
    use Value::*;
    if op.is_comparison() {
        return eval_comparison(op, l, r);
    }
    match op {
        BinOp::Add | BinOp::Sub => match (&l, &r) {
            (Int(a), Int(b)) => {
                let res = if op == BinOp::Add { a.checked_add(*b) } else { a.checked_sub(*b) };
                res.map(Int).ok_or_else(|| ExprError::IntOverflow(op.symbol().into()))
            }
            (Vector(a), Vector(b)) => {
                if a.len() != b.len() {
                    return Err(ExprError::TypeMismatch(format!(
                        "vector lengths {} and {} in `{}`",
                        a.len(),
                        b.len(),
                        op.symbol()
                    )));
                }
                let data = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| if op == BinOp::Add { x + y } else { x - y })
                    .collect();
                Ok(Vector(data))
            }
            (Matrix(a), Matrix(b)) => {
                if a.dim() != b.dim() {
                    return Err(ExprError::TypeMismatch(format!(
                        "matrix dimensions {} and {} in `{}`",
                        a.dim(),
                        b.dim(),
                        op.symbol()
                    )));
                }
                Ok(Matrix(if op == BinOp::Add { a.add(b) } else { a.sub(b) }))
            }
            _ => {
                let (a, b) = numeric_pair(op, &l, &r)?;
                Ok(Real(if op == BinOp::Add { a + b } else { a - b }))
            }
        },
        BinOp::Mul => match (&l, &r) {
            (Int(a), Int(b)) => a
                .checked_mul(*b)
                .map(Int)
                .ok_or_else(|| ExprError::IntOverflow("*".into())),
            (Vector(v), other) | (other, Vector(v)) => {
                let s = other.as_f64().ok_or_else(|| {
                    ExprError::TypeMismatch(format!(
                        "`*` cannot combine vector and {}",
                        other.type_of()
                    ))
                })?;
                Ok(Vector(v.iter().map(|x| x * s).collect()))
            }
            (Matrix(m), other) | (other, Matrix(m)) => {
                let s = other.as_f64().ok_or_else(|| {
                    ExprError::TypeMismatch(format!(
                        "`*` cannot combine matrix and {}",
                        other.type_of()
                    ))
                })?;
                Ok(Matrix(m.scaled(s)))
            }
            _ => {
                let (a, b) = numeric_pair(op, &l, &r)?;
                Ok(Real(a * b))
            }
        },
        BinOp::Div => match (&l, &r) {
            (Vector(v), other) => {
                let s = divisor(other)?;
                Ok(Vector(v.iter().map(|x| x / s).collect()))
            }
            (Matrix(m), other) => {
                let s = divisor(other)?;
                Ok(Matrix(m.scaled(1.0 / s)))
            }
            // Division is always real-valued, even between two integers.
            _ => {
                let (a, b) = numeric_pair(op, &l, &r)?;
                Ok(Real(a / b))
            }
        },
        BinOp::And | BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            unreachable!("handled above")
        }
    }
}

fn divisor(v: &Value) -> Result<f64, ExprError> {
    v.as_f64().ok_or_else(|| {
        ExprError::TypeMismatch(format!("`/` expects a scalar divisor, got {}", v.type_of()))
    })
}

fn eval_comparison(op: BinOp, l: Value, r: Value) -> Result<Value, ExprError> {
    use std::cmp::Ordering;
    let ord = match (&l, &r) {
        (Value::Text(a), Value::Text(b)) => a.cmp(b),
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        _ => {
            if let (Some(a), Some(b)) = (l.as_f64(), r.as_f64()) {
                a.partial_cmp(&b).expect("stored floats are never NaN")
            } else if matches!(op, BinOp::Eq | BinOp::Ne)
                && l.type_of() == r.type_of()
            {
                // Structural (bit-exact) equality for vectors and matrices.
                if l == r {
                    Ordering::Equal
                } else {
                    Ordering::Less
                }
            } else {
                return Err(ExprError::TypeMismatch(format!(
                    "`{}` cannot compare {} and {}",
                    op.symbol(),
                    l.type_of(),
                    r.type_of()
                )));
            }
        }
    };
    let res = match op {
        BinOp::Eq => ord == Ordering::Equal,
        BinOp::Ne => ord != Ordering::Equal,
        BinOp::Lt => ord == Ordering::Less,
        BinOp::Le => ord != Ordering::Greater,
        BinOp::Gt => ord == Ordering::Greater,
        BinOp::Ge => ord != Ordering::Less,
        _ => unreachable!(),
    };
    Ok(bool_value(res))
}

fn infer_binary(op: BinOp, l: AttrType, r: AttrType) -> Result<AttrType, ExprError> {
    use AttrType::*;
    if op == BinOp::And || op.is_comparison() {
        return Ok(Int);
    }
    let err = || {
        Err(ExprError::TypeMismatch(format!(
            "`{}` cannot combine {l} and {r}",
            op.symbol()
        )))
    };
    match op {
        BinOp::Add | BinOp::Sub => match (l, r) {
            (Int, Int) => Ok(Int),
            (Int | Real, Int | Real) => Ok(Real),
            (Vector(a), Vector(b)) if a == b => Ok(Vector(a)),
            (Matrix(a), Matrix(b)) if a == b => Ok(Matrix(a)),
            _ => err(),
        },
        BinOp::Mul => match (l, r) {
            (Int, Int) => Ok(Int),
            (Int | Real, Int | Real) => Ok(Real),
            (Vector(d), Int | Real) | (Int | Real, Vector(d)) => Ok(Vector(d)),
            (Matrix(d), Int | Real) | (Int | Real, Matrix(d)) => Ok(Matrix(d)),
            _ => err(),
        },
        BinOp::Div => match (l, r) {
            (Int | Real, Int | Real) => Ok(Real),
            (Vector(d), Int | Real) => Ok(Vector(d)),
            (Matrix(d), Int | Real) => Ok(Matrix(d)),
            _ => err(),
        },
        _ => unreachable!(),
    }
}

/// A scalar function registered in the dialect's function table.
pub struct FunctionSig {
    pub name: &'static str,
    pub min_args: usize,
    pub max_args: usize,
    eval: fn(&[Value]) -> Result<Value, ExprError>,
    infer: fn(&[AttrType]) -> Result<AttrType, ExprError>,
}

impl std::fmt::Debug for FunctionSig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FunctionSig({})", self.name)
    }
}

impl FunctionSig {
    fn infer(&self, args: &[AttrType]) -> Result<AttrType, ExprError> {
        (self.infer)(args)
    }
}

fn arg_f64(v: &Value, func: &str, pos: usize) -> Result<f64, ExprError> {
    v.as_f64().ok_or_else(|| {
        ExprError::TypeMismatch(format!(
            "`{func}` argument {} must be numeric, got {}",
            pos + 1,
            v.type_of()
        ))
    })
}

fn arg_vec<'a>(v: &'a Value, func: &str, pos: usize) -> Result<&'a [f64], ExprError> {
    v.as_vector().ok_or_else(|| {
        ExprError::TypeMismatch(format!(
            "`{func}` argument {} must be a vector, got {}",
            pos + 1,
            v.type_of()
        ))
    })
}

fn arg_mat<'a>(v: &'a Value, func: &str, pos: usize) -> Result<&'a Matrix, ExprError> {
    v.as_matrix().ok_or_else(|| {
        ExprError::TypeMismatch(format!(
            "`{func}` argument {} must be a matrix, got {}",
            pos + 1,
            v.type_of()
        ))
    })
}

fn expect_scalar(t: &AttrType, func: &str) -> Result<(), ExprError> {
    match t {
        AttrType::Int | AttrType::Real => Ok(()),
        other => Err(ExprError::TypeMismatch(format!(
            "`{func}` expects numeric arguments, got {other}"
        ))),
    }
}

static FUNCTIONS: &[FunctionSig] = &[
    FunctionSig {
        name: "norm",
        min_args: 3,
        max_args: 3,
        eval: |args| match &args[0] {
            Value::Vector(x) => {
                let mean = arg_vec(&args[1], "norm", 1)?;
                let cov = arg_mat(&args[2], "norm", 2)?;
                Ok(Value::Real(kernels::norm_pdf(x, mean, cov)?))
            }
            // Scalar form: norm(x, mean, sd) with sd a standard deviation.
            _ => {
                let x = arg_f64(&args[0], "norm", 0)?;
                let mean = arg_f64(&args[1], "norm", 1)?;
                let sd = arg_f64(&args[2], "norm", 2)?;
                Ok(Value::Real(kernels::norm_pdf_1d(x, mean, sd)?))
            }
        },
        infer: |args| match args[0] {
            AttrType::Vector(d) => {
                if args[1] != AttrType::Vector(d) || args[2] != AttrType::Matrix(d) {
                    return Err(ExprError::TypeMismatch(format!(
                        "`norm` expects (vector[{d}], vector[{d}], matrix[{d}x{d}]), got ({}, {}, {})",
                        args[0], args[1], args[2]
                    )));
                }
                Ok(AttrType::Real)
            }
            _ => {
                for t in args {
                    expect_scalar(t, "norm")?;
                }
                Ok(AttrType::Real)
            }
        },
    },
    FunctionSig {
        name: "pow",
        min_args: 1,
        max_args: 2,
        // pow(x) squares; pow(x, p) raises to an arbitrary power.
        eval: |args| {
            let x = arg_f64(&args[0], "pow", 0)?;
            let p = if args.len() == 2 { arg_f64(&args[1], "pow", 1)? } else { 2.0 };
            Ok(Value::Real(x.powf(p)))
        },
        infer: |args| {
            for t in args {
                expect_scalar(t, "pow")?;
            }
            Ok(AttrType::Real)
        },
    },
    FunctionSig {
        name: "sqrt",
        min_args: 1,
        max_args: 1,
        eval: |args| {
            let x = arg_f64(&args[0], "sqrt", 0)?;
            if x < 0.0 {
                return Err(ExprError::TypeMismatch(format!("sqrt of negative value {x}")));
            }
            Ok(Value::Real(x.sqrt()))
        },
        infer: |args| {
            expect_scalar(&args[0], "sqrt")?;
            Ok(AttrType::Real)
        },
    },
    FunctionSig {
        name: "exp",
        min_args: 1,
        max_args: 1,
        eval: |args| Ok(Value::Real(arg_f64(&args[0], "exp", 0)?.exp())),
        infer: |args| {
            expect_scalar(&args[0], "exp")?;
            Ok(AttrType::Real)
        },
    },
    FunctionSig {
        name: "ln",
        min_args: 1,
        max_args: 1,
        eval: |args| {
            let x = arg_f64(&args[0], "ln", 0)?;
            if !(x > 0.0) {
                return Err(ExprError::TypeMismatch(format!("ln of non-positive value {x}")));
            }
            Ok(Value::Real(x.ln()))
        },
        infer: |args| {
            expect_scalar(&args[0], "ln")?;
            Ok(AttrType::Real)
        },
    },
    FunctionSig {
        name: "dot",
        min_args: 2,
        max_args: 2,
        eval: |args| {
            let u = arg_vec(&args[0], "dot", 0)?;
            let v = arg_vec(&args[1], "dot", 1)?;
            Ok(Value::Real(kernels::dot(u, v)?))
        },
        infer: |args| match (args[0], args[1]) {
            (AttrType::Vector(a), AttrType::Vector(b)) if a == b => Ok(AttrType::Real),
            _ => Err(ExprError::TypeMismatch(format!(
                "`dot` expects two equal-length vectors, got ({}, {})",
                args[0], args[1]
            ))),
        },
    },
    FunctionSig {
        name: "outer",
        min_args: 2,
        max_args: 2,
        eval: |args| {
            let u = arg_vec(&args[0], "outer", 0)?;
            let v = arg_vec(&args[1], "outer", 1)?;
            if u.len() != v.len() {
                return Err(ExprError::TypeMismatch(format!(
                    "`outer` expects equal-length vectors, got {} and {}",
                    u.len(),
                    v.len()
                )));
            }
            Ok(Value::Matrix(Matrix::outer(u, v)))
        },
        infer: |args| match (args[0], args[1]) {
            (AttrType::Vector(a), AttrType::Vector(b)) if a == b => Ok(AttrType::Matrix(a)),
            _ => Err(ExprError::TypeMismatch(format!(
                "`outer` expects two equal-length vectors, got ({}, {})",
                args[0], args[1]
            ))),
        },
    },
    FunctionSig {
        name: "scale",
        min_args: 2,
        max_args: 2,
        eval: |args| {
            let s = arg_f64(&args[0], "scale", 0)?;
            match &args[1] {
                Value::Vector(v) => Ok(Value::Vector(v.iter().map(|x| s * x).collect())),
                Value::Matrix(m) => Ok(Value::Matrix(m.scaled(s))),
                other => Err(ExprError::TypeMismatch(format!(
                    "`scale` argument 2 must be a vector or matrix, got {}",
                    other.type_of()
                ))),
            }
        },
        infer: |args| {
            expect_scalar(&args[0], "scale")?;
            match args[1] {
                AttrType::Vector(d) => Ok(AttrType::Vector(d)),
                AttrType::Matrix(d) => Ok(AttrType::Matrix(d)),
                other => Err(ExprError::TypeMismatch(format!(
                    "`scale` argument 2 must be a vector or matrix, got {other}"
                ))),
            }
        },
    },
    FunctionSig {
        name: "mahalanobis",
        min_args: 3,
        max_args: 3,
        eval: |args| {
            let x = arg_vec(&args[0], "mahalanobis", 0)?;
            let mean = arg_vec(&args[1], "mahalanobis", 1)?;
            let cov = arg_mat(&args[2], "mahalanobis", 2)?;
            Ok(Value::Real(kernels::mahalanobis(x, mean, cov)?))
        },
        infer: |args| match (args[0], args[1], args[2]) {
            (AttrType::Vector(a), AttrType::Vector(b), AttrType::Matrix(c))
                if a == b && b == c =>
            {
                Ok(AttrType::Real)
            }
            _ => Err(ExprError::TypeMismatch(format!(
                "`mahalanobis` expects (vector, vector, matrix) of one dimension, got ({}, {}, {})",
                args[0], args[1], args[2]
            ))),
        },
    },
    FunctionSig {
        name: "entropy",
        min_args: 1,
        max_args: 1,
        eval: |args| {
            let p = arg_vec(&args[0], "entropy", 0)?;
            Ok(Value::Real(kernels::entropy(p)?))
        },
        infer: |args| match args[0] {
            AttrType::Vector(_) => Ok(AttrType::Real),
            other => Err(ExprError::TypeMismatch(format!(
                "`entropy` expects a probability vector, got {other}"
            ))),
        },
    },
    FunctionSig {
        name: "solve",
        min_args: 2,
        max_args: 2,
        eval: |args| {
            let a = arg_mat(&args[0], "solve", 0)?;
            let b = arg_vec(&args[1], "solve", 1)?;
            Ok(Value::Vector(kernels::solve_spd(a, b)?))
        },
        infer: |args| match (args[0], args[1]) {
            (AttrType::Matrix(a), AttrType::Vector(b)) if a == b => Ok(AttrType::Vector(a)),
            _ => Err(ExprError::TypeMismatch(format!(
                "`solve` expects (matrix[dxd], vector[d]), got ({}, {})",
                args[0], args[1]
            ))),
        },
    },
    FunctionSig {
        name: "regcov",
        min_args: 2,
        max_args: 2,
        eval: |args| {
            let m = arg_mat(&args[0], "regcov", 0)?;
            let floor = arg_f64(&args[1], "regcov", 1)?;
            Ok(Value::Matrix(kernels::regularize_cov(m, floor)))
        },
        infer: |args| match (args[0], args[1]) {
            (AttrType::Matrix(d), AttrType::Int | AttrType::Real) => Ok(AttrType::Matrix(d)),
            _ => Err(ExprError::TypeMismatch(format!(
                "`regcov` expects (matrix, scalar floor), got ({}, {})",
                args[0], args[1]
            ))),
        },
    },
    FunctionSig {
        name: "max",
        min_args: 2,
        max_args: 2,
        // Scalar two-argument maximum; single-argument max is the aggregate.
        eval: |args| match (&args[0], &args[1]) {
            (Value::Int(a), Value::Int(b)) => Ok(Value::Int(*a.max(b))),
            _ => {
                let a = arg_f64(&args[0], "max", 0)?;
                let b = arg_f64(&args[1], "max", 1)?;
                Ok(Value::Real(a.max(b)))
            }
        },
        infer: |args| {
            expect_scalar(&args[0], "max")?;
            expect_scalar(&args[1], "max")?;
            if args[0] == AttrType::Int && args[1] == AttrType::Int {
                Ok(AttrType::Int)
            } else {
                Ok(AttrType::Real)
            }
        },
    },
];

/// The dialect's registered scalar functions.
pub fn function_table() -> &'static [FunctionSig] {
    FUNCTIONS
}

pub fn lookup_function(name: &str, arg_count: usize) -> Result<&'static FunctionSig, ExprError> {
    let func = FUNCTIONS
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| ExprError::UnknownFunction(name.to_string()))?;
    if arg_count < func.min_args || arg_count > func.max_args {
        return Err(ExprError::WrongArity { name: name.to_string(), got: arg_count });
    }
    Ok(func)
}
