//! Abstract syntax for the dialect, plus a pretty printer whose output
//! parses back to an equal tree.
//!
//! A statement may carry several union arms so that structurally invalid
//! texts (two `union by update` branches, or an update arm mixed with
//! `union all` arms) can be represented and then rejected by validation
//! with a precise diagnostic instead of a parse error. Valid statements
//! have either exactly one update arm or only `union all` arms.

use crate::expr::{BinOp, Expr};

#[derive(Debug, Clone, PartialEq)]
pub enum UnionMode {
    UnionAll,
    /// Destructive update keyed on the named attributes.
    UnionByUpdate(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromItem {
    Table { name: String, alias: Option<String> },
    Derived { query: Box<SelectAst>, alias: String },
}

impl FromItem {
    /// The name this item binds in the enclosing query's namespace.
    pub fn binding(&self) -> &str {
        match self {
            FromItem::Table { name, alias } => alias.as_deref().unwrap_or(name),
            FromItem::Derived { alias, .. } => alias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectAst {
    pub projections: Vec<Projection>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<Expr>,
}

impl SelectAst {
    /// Every relation name this query reads, including reads inside
    /// derived tables, in appearance order with duplicates kept.
    pub fn reads(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_reads(&mut out);
        out
    }

    fn collect_reads(&self, out: &mut Vec<String>) {
        for item in &self.from {
            match item {
                FromItem::Table { name, .. } => out.push(name.clone()),
                FromItem::Derived { query, .. } => query.collect_reads(out),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputedBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub query: SelectAst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub recursive_name: String,
    pub columns: Vec<String>,
    pub initial_query: SelectAst,
    /// The arms that follow the initial query, each with the union mode
    /// written before it.
    pub arms: Vec<(UnionMode, SelectAst)>,
    pub computed_by: Vec<ComputedBlock>,
    pub max_recursion: Option<u32>,
    /// Defaults to `select * from <recursive_name>` when the text has no
    /// trailing select.
    pub final_query: SelectAst,
}

impl QueryAst {
    /// The single arm's mode, for statements that passed validation.
    pub fn union_mode(&self) -> &UnionMode {
        &self.arms[0].0
    }

    pub fn select_star_from(name: &str) -> SelectAst {
        SelectAst {
            projections: vec![Projection::Star],
            from: vec![FromItem::Table { name: name.to_string(), alias: None }],
            where_clause: None,
            group_by: Vec::new(),
        }
    }

    pub fn pretty_print(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "with {}({}) as (\n",
            self.recursive_name,
            self.columns.join(", ")
        ));
        out.push_str(&format!("    ({})", print_select(&self.initial_query)));
        for (mode, query) in &self.arms {
            match mode {
                UnionMode::UnionAll => out.push_str("\n  union all\n"),
                UnionMode::UnionByUpdate(key) => {
                    out.push_str(&format!("\n  union by update {}\n", key.join(", ")))
                }
            }
            out.push_str(&format!("    ({}", print_select(query)));
            if !self.computed_by.is_empty() && std::ptr::eq(query, &self.arms.last().unwrap().1) {
                out.push_str("\n     computed by");
                for block in &self.computed_by {
                    out.push_str(&format!(
                        "\n       {}({}) as {}",
                        block.name,
                        block.columns.join(", "),
                        print_select(&block.query)
                    ));
                }
            }
            out.push(')');
        }
        if let Some(n) = self.max_recursion {
            out.push_str(&format!("\n  maxrecursion {n}"));
        }
        out.push_str("\n)\n");
        out.push_str(&print_select(&self.final_query));
        out.push('\n');
        out
    }
}

fn print_select(q: &SelectAst) -> String {
    let mut out = String::from("select ");
    let projs: Vec<String> = q
        .projections
        .iter()
        .map(|p| match p {
            Projection::Star => "*".to_string(),
            Projection::Expr { expr, alias: Some(a) } => {
                format!("{} as {a}", print_expr(expr, 0))
            }
            Projection::Expr { expr, alias: None } => print_expr(expr, 0),
        })
        .collect();
    out.push_str(&projs.join(", "));
    if !q.from.is_empty() {
        out.push_str(" from ");
        let items: Vec<String> = q
            .from
            .iter()
            .map(|item| match item {
                FromItem::Table { name, alias: None } => name.clone(),
                FromItem::Table { name, alias: Some(a) } => format!("{name} as {a}"),
                FromItem::Derived { query, alias } => {
                    format!("({}) as {alias}", print_select(query))
                }
            })
            .collect();
        out.push_str(&items.join(", "));
    }
    if let Some(w) = &q.where_clause {
        out.push_str(&format!(" where {}", print_expr(w, 0)));
    }
    if !q.group_by.is_empty() {
        let keys: Vec<String> = q.group_by.iter().map(|e| print_expr(e, 0)).collect();
        out.push_str(&format!(" group by {}", keys.join(", ")));
    }
    out
}

fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::And => 1,
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 2,
        BinOp::Add | BinOp::Sub => 3,
        BinOp::Mul | BinOp::Div => 4,
    }
}

/// Renders `expr` assuming the surrounding context binds with strength
/// `ctx`; parenthesizes whenever this node binds no tighter.
fn print_expr(expr: &Expr, ctx: u8) -> String {
    match expr {
        Expr::Column { qualifier: Some(q), name } => format!("{q}.{name}"),
        Expr::Column { qualifier: None, name } => name.clone(),
        Expr::Int(v) => format!("{v}"),
        Expr::Real(v) => format!("{v:?}"),
        Expr::Text(s) => s.clone(),
        Expr::Neg(inner) => format!("-{}", print_expr(inner, 6)),
        Expr::Binary { op, lhs, rhs } => {
            let p = prec(*op);
            // Left-associative: the right child must bind strictly tighter.
            let s = format!(
                "{} {} {}",
                print_expr(lhs, p),
                op.symbol(),
                print_expr(rhs, p + 1)
            );
            if p < ctx {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::Call { name, args } => {
            let rendered: Vec<String> = args.iter().map(|a| print_expr(a, 0)).collect();
            format!("{name}({})", rendered.join(", "))
        }
        Expr::Window { func, arg, partition_by } => {
            let keys: Vec<String> = partition_by.iter().map(|e| print_expr(e, 0)).collect();
            format!(
                "{func}({}) over (partition by {})",
                print_expr(arg, 0),
                keys.join(", ")
            )
        }
    }
}
