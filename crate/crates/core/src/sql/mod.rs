//! The enhanced recursive query dialect.
//!
//! A statement has the shape
//!
//! ```text
//! with name(col, …) as (
//!     (select …)
//!   union by update key          -- or: union all
//!     (select …
//!      computed by
//!        temp1(col, …) as select …
//!        temp2(col, …) as select …)
//!   maxrecursion 10
//! )
//! select … from name
//! ```
//!
//! The initial query seeds the recursive relation; each iteration
//! re-evaluates the `computed by` temporaries (which may read the current
//! recursive relation and earlier temporaries), evaluates the recursive
//! arm, and folds it in — cumulatively for `union all`, destructively per
//! key for `union by update`. The trailing select runs over the settled
//! relation and is optional; omitting it reads the whole relation.
//!
//! The pipeline is `parse` → [`validate::validate`] → [`lower::lower`],
//! each stage a pure function.

pub mod ast;
pub mod corpus;
pub mod lexer;
pub mod lower;
pub mod parser;
pub mod validate;

pub use ast::{ComputedBlock, FromItem, Projection, QueryAst, SelectAst, UnionMode};
pub use lower::{lower, LogicalPlan, LowerError, PlanNode, ProjItem};
pub use parser::parse;
pub use validate::{validate, DependencyGraph, Diagnostic};

/// A syntax-level error with the source position that produced it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl SyntaxError {
    pub fn new(message: impl Into<String>, line: usize, column: usize) -> Self {
        SyntaxError { message: message.into(), line, column }
    }
}
