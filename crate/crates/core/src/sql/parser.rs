//! Recursive-descent parser for the dialect.
//!
//! The grammar (keywords case-insensitive):
//!
//! ```text
//! statement := WITH ident "(" cols ")" AS "(" body ")" [select] [";"]
//! body      := "(" armbody ")" arm+ [MAXRECURSION int]
//! arm       := (UNION ALL | UNION BY UPDATE cols) "(" armbody ")"
//! armbody   := select [COMPUTED BY block+]
//! block     := ident "(" cols ")" AS select
//! select    := SELECT proj ("," proj)*
//!              [FROM item ("," item)*] [WHERE expr] [GROUP BY expr ("," expr)*]
//! proj      := "*" | expr [AS ident]
//! item      := ident [[AS] ident] | "(" select ")" [AS] ident
//! expr      := cmp (AND cmp)* ; cmp := sum [cmpop sum] ; sum/term: usual
//! primary   := number | ident | ident "." ident | call | "(" expr ")"
//! call      := ident "(" expr ("," expr)* ")" [OVER "(" PARTITION BY expr-list ")"]
//! ```
//!
//! Computed-by blocks are juxtaposed, so the parser must know where one
//! block's select ends and the next begins: an identifier directly
//! followed by `(` can never continue a select (a bare table alias is only
//! accepted when *not* followed by `(`), which makes `n(k, pie) as …`
//! unambiguously the start of the next block.

use super::ast::{ComputedBlock, FromItem, Projection, QueryAst, SelectAst, UnionMode};
use super::lexer::{lex, Tok, Token};
use super::SyntaxError;
use crate::expr::{call, col, lit, lit_int, qcol, BinOp, Expr};

pub fn parse(source: &str) -> Result<QueryAst, SyntaxError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.statement()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn describe_here(&self) -> String {
        match self.peek() {
            Some(t) => format!("{t}"),
            None => "end of input".to_string(),
        }
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        let (line, column) = self
            .tokens
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .or_else(|| self.tokens.last().map(|t| (t.line, t.column + 1)))
            .unwrap_or((1, 1));
        SyntaxError::new(message, line, column)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", self.describe_here())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}, found {}", self.describe_here()))),
        }
    }

    fn ident_list(&mut self, what: &str) -> Result<Vec<String>, SyntaxError> {
        let mut out = vec![self.ident(what)?];
        while self.eat(&Tok::Comma) {
            out.push(self.ident(what)?);
        }
        Ok(out)
    }

    fn statement(&mut self) -> Result<QueryAst, SyntaxError> {
        self.expect(Tok::With, "`with`")?;
        let recursive_name = self.ident("recursive relation name")?;
        self.expect(Tok::LParen, "`(` before the declared column list")?;
        let columns = self.ident_list("column name")?;
        self.expect(Tok::RParen, "`)` after the declared column list")?;
        self.expect(Tok::As, "`as`")?;
        self.expect(Tok::LParen, "`(` opening the with-body")?;

        self.expect(Tok::LParen, "`(` opening the initial query")?;
        let (initial_query, mut computed_by) = self.armbody()?;
        self.expect(Tok::RParen, "`)` closing the initial query")?;

        let mut arms = Vec::new();
        while self.eat(&Tok::Union) {
            let mode = if self.eat(&Tok::All) {
                UnionMode::UnionAll
            } else {
                self.expect(Tok::By, "`all` or `by update`")?;
                self.expect(Tok::Update, "`update`")?;
                UnionMode::UnionByUpdate(self.ident_list("update key attribute")?)
            };
            self.expect(Tok::LParen, "`(` opening the union arm")?;
            let (query, blocks) = self.armbody()?;
            self.expect(Tok::RParen, "`)` closing the union arm")?;
            computed_by.extend(blocks);
            arms.push((mode, query));
        }
        if arms.is_empty() {
            return Err(self.error("expected `union all` or `union by update` arm"));
        }

        let max_recursion = if self.eat(&Tok::Maxrecursion) {
            match self.peek() {
                Some(&Tok::Int(n)) if n >= 1 => {
                    self.pos += 1;
                    Some(n as u32)
                }
                Some(&Tok::Int(_)) => {
                    return Err(self.error("maxrecursion bound must be a positive integer"))
                }
                _ => {
                    return Err(self.error(format!(
                        "expected iteration bound after `maxrecursion`, found {}",
                        self.describe_here()
                    )))
                }
            }
        } else {
            None
        };
        self.expect(Tok::RParen, "`)` closing the with-body")?;

        let final_query = if self.peek() == Some(&Tok::Select) {
            self.select()?
        } else {
            QueryAst::select_star_from(&recursive_name)
        };
        self.eat(&Tok::Semi);
        if self.pos < self.tokens.len() {
            return Err(self.error(format!(
                "unexpected input after the statement: {}",
                self.describe_here()
            )));
        }

        Ok(QueryAst {
            recursive_name,
            columns,
            initial_query,
            arms,
            computed_by,
            max_recursion,
            final_query,
        })
    }

    /// The interior of an arm's parentheses: a select optionally followed
    /// by `computed by` and its blocks.
    fn armbody(&mut self) -> Result<(SelectAst, Vec<ComputedBlock>), SyntaxError> {
        let query = self.select()?;
        let mut blocks = Vec::new();
        if self.eat(&Tok::Computed) {
            self.expect(Tok::By, "`by` after `computed`")?;
            loop {
                blocks.push(self.block()?);
                let starts_block = matches!(self.peek(), Some(Tok::Ident(_)))
                    && self.peek_at(1) == Some(&Tok::LParen);
                if !starts_block {
                    break;
                }
            }
        }
        Ok((query, blocks))
    }

    fn block(&mut self) -> Result<ComputedBlock, SyntaxError> {
        let name = self.ident("computed-by relation name")?;
        self.expect(Tok::LParen, "`(` before the block's column list")?;
        let columns = self.ident_list("column name")?;
        self.expect(Tok::RParen, "`)` after the block's column list")?;
        self.expect(Tok::As, "`as` after the block's column list")?;
        let query = self.select()?;
        Ok(ComputedBlock { name, columns, query })
    }

    fn select(&mut self) -> Result<SelectAst, SyntaxError> {
        self.expect(Tok::Select, "`select`")?;
        let mut projections = Vec::new();
        loop {
            if self.eat(&Tok::Star) {
                projections.push(Projection::Star);
            } else {
                let expr = self.expr()?;
                let alias = if self.eat(&Tok::As) {
                    Some(self.ident("projection alias")?)
                } else {
                    None
                };
                projections.push(Projection::Expr { expr, alias });
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }

        let mut from = Vec::new();
        if self.eat(&Tok::From) {
            loop {
                from.push(self.from_item()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }

        let where_clause = if self.eat(&Tok::Where) { Some(self.expr()?) } else { None };

        let mut group_by = Vec::new();
        if self.eat(&Tok::Group) {
            self.expect(Tok::By, "`by` after `group`")?;
            group_by.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.expr()?);
            }
        }

        Ok(SelectAst { projections, from, where_clause, group_by })
    }

    /// A bare identifier counts as a table alias only when not directly
    /// followed by `(`; that is what separates `from x n(k) as …` (alias-
    /// free scan, then the next computed-by block) from `from x n` (scan
    /// aliased `n`).
    fn alias_opt(&mut self) -> Result<Option<String>, SyntaxError> {
        if self.eat(&Tok::As) {
            return Ok(Some(self.ident("alias")?));
        }
        if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek_at(1) != Some(&Tok::LParen) {
            return Ok(Some(self.ident("alias")?));
        }
        Ok(None)
    }

    fn from_item(&mut self) -> Result<FromItem, SyntaxError> {
        if self.eat(&Tok::LParen) {
            if self.peek() != Some(&Tok::Select) {
                return Err(self.error(format!(
                    "expected a derived table `select`, found {}",
                    self.describe_here()
                )));
            }
            let query = self.select()?;
            self.expect(Tok::RParen, "`)` closing the derived table")?;
            let alias = self
                .alias_opt()?
                .ok_or_else(|| self.error("derived table requires an alias"))?;
            return Ok(FromItem::Derived { query: Box::new(query), alias });
        }
        let name = self.ident("table name")?;
        let alias = self.alias_opt()?;
        Ok(FromItem::Table { name, alias })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.comparison()?;
        while self.eat(&Tok::And) {
            let rhs = self.comparison()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Eq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat(&Tok::Minus) {
            return Ok(self.unary()?.neg());
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(lit_int(v))
            }
            Some(Tok::Real(v)) => {
                self.pos += 1;
                Ok(lit(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Select) {
                    return Err(self.error("subqueries are not allowed inside expressions"));
                }
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat(&Tok::LParen) {
                    let mut args = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` closing the argument list")?;
                    if self.eat(&Tok::Over) {
                        self.expect(Tok::LParen, "`(` after `over`")?;
                        self.expect(Tok::Partition, "`partition`")?;
                        self.expect(Tok::By, "`by` after `partition`")?;
                        let mut partition_by = vec![self.expr()?];
                        while self.eat(&Tok::Comma) {
                            partition_by.push(self.expr()?);
                        }
                        self.expect(Tok::RParen, "`)` closing the window")?;
                        if args.len() != 1 {
                            return Err(
                                self.error("a window aggregate takes exactly one argument")
                            );
                        }
                        return Ok(Expr::Window {
                            func: name,
                            arg: Box::new(args.pop().unwrap()),
                            partition_by,
                        });
                    }
                    return Ok(call(&name, args));
                }
                if self.eat(&Tok::Dot) {
                    let attr = self.ident("attribute name after `.`")?;
                    return Ok(qcol(&name, &attr));
                }
                Ok(col(&name))
            }
            _ => Err(self.error(format!("expected an expression, found {}", self.describe_here()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::corpus::{GMM_FIG_TEXT, TC_TEXT};
    use super::*;

    #[test]
    fn transitive_closure_parses_with_default_final_select() {
        let ast = parse(TC_TEXT).unwrap();
        assert_eq!(ast.recursive_name, "tc");
        assert_eq!(ast.columns, vec!["f", "t"]);
        assert_eq!(ast.arms.len(), 1);
        assert_eq!(ast.arms[0].0, UnionMode::UnionAll);
        assert!(ast.computed_by.is_empty());
        assert_eq!(ast.max_recursion, None);
        assert_eq!(ast.final_query, QueryAst::select_star_from("tc"));
        let arm = &ast.arms[0].1;
        assert_eq!(arm.from.len(), 2);
        assert_eq!(arm.where_clause, Some(qcol("tc", "t").eq(qcol("e", "f"))));
    }

    #[test]
    fn gaussian_mixture_statement_parses() {
        let ast = parse(GMM_FIG_TEXT).unwrap();
        assert_eq!(ast.recursive_name, "gmm");
        assert_eq!(ast.columns, vec!["k", "pie", "mean", "cov"]);
        assert_eq!(ast.union_mode(), &UnionMode::UnionByUpdate(vec!["k".into()]));
        assert_eq!(ast.max_recursion, Some(10));
        let names: Vec<&str> = ast.computed_by.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, vec!["r", "n", "c"]);
        // The responsibility query carries the window function.
        let r = &ast.computed_by[0].query;
        assert_eq!(r.projections.len(), 3);
        let has_window = matches!(
            &r.projections[2],
            Projection::Expr { expr, .. }
                if format!("{expr:?}").contains("Window")
        );
        assert!(has_window, "E-step projection should contain a window function");
        // The covariance query reads a derived table aliased `t`.
        let c = &ast.computed_by[2].query;
        assert!(matches!(&c.from[0], FromItem::Derived { alias, .. } if alias == "t"));
        assert_eq!(c.group_by, vec![qcol("r", "k")]);
    }

    #[test]
    fn counter_statement_parses() {
        let ast = parse("with r(n) as ((select 0) union all (select n + 1 from r))").unwrap();
        assert_eq!(ast.columns, vec!["n"]);
        assert!(ast.arms[0].1.from.len() == 1);
        assert!(ast.initial_query.from.is_empty());
    }

    #[test]
    fn multiple_arms_are_representable() {
        let ast = parse(
            "with r(k, v) as (
               (select k, v from base)
               union by update k (select k, v + 1 from r)
               union by update k (select k, v + 2 from r))",
        )
        .unwrap();
        assert_eq!(ast.arms.len(), 2);
    }

    #[test]
    fn computed_by_blocks_separate_from_bare_aliases() {
        // `x y` is an aliased scan; `n(k) as …` after it is the next block.
        let ast = parse(
            "with r(k) as (
               (select k from base)
               union by update k
               (select k from m
                computed by
                  m(k) as select y.k from x y
                  n(k) as select k from m))",
        )
        .unwrap();
        assert_eq!(ast.computed_by.len(), 2);
        let m = &ast.computed_by[0].query;
        assert!(
            matches!(&m.from[0], FromItem::Table { name, alias: Some(a) } if name == "x" && a == "y")
        );
    }

    #[test]
    fn pretty_print_round_trips() {
        for text in [
            TC_TEXT,
            GMM_FIG_TEXT,
            "with r(n) as ((select 0) union all (select n + 1 from r)) select n from r where n > 2",
        ] {
            let ast = parse(text).unwrap();
            let printed = ast.pretty_print();
            let reparsed = parse(&printed)
                .unwrap_or_else(|e| panic!("printed text failed to parse: {e}\n{printed}"));
            assert_eq!(reparsed, ast, "print → parse changed the tree for:\n{printed}");
        }
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse("with tc(f, t) as (\n  (select f, t fro e))").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("fro") || err.message.contains("expected"));

        let err = parse("with tc(f) as ((select f from e) union)").unwrap_err();
        assert!(err.message.contains("`all` or `by update`"));
    }

    #[test]
    fn maxrecursion_must_be_positive() {
        let err =
            parse("with r(n) as ((select 0) union all (select n from r) maxrecursion 0)")
                .unwrap_err();
        assert!(err.message.contains("positive"));
    }

    #[test]
    fn subquery_in_expression_is_rejected() {
        let err = parse(
            "with r(n) as ((select (select 1)) union all (select n from r))",
        )
        .unwrap_err();
        assert!(err.message.contains("subqueries"));
    }

    #[test]
    fn trailing_semicolon_is_accepted() {
        assert!(parse("with r(n) as ((select 0) union all (select n + 1 from r));").is_ok());
    }
}
