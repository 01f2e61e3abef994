//! Structural validation of a parsed statement.
//!
//! Validation enforces the rules that make the iterative semantics well
//! defined: a single destructive arm (or any number of cumulative ones), a
//! key drawn from the declared columns, computed-by temporaries that form
//! an acyclic chain (they may read the recursive relation and earlier
//! temporaries, never themselves), and no reads of undefined relations.
//! The result is the dependency graph, whose topological order of
//! temporaries drives the lowering.

use super::ast::{QueryAst, SelectAst, UnionMode};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Diagnostic {
    #[error("`union by update` may appear at most once")]
    MultipleUnionByUpdate,
    #[error("`union by update` cannot be combined with `union all` arms")]
    MixedUnionModes,
    #[error("computed-by relation `{name}` reads itself; these queries must be non-recursive")]
    RecursiveComputedBy { name: String },
    #[error("computed-by relation `{name}` is declared twice")]
    DuplicateComputedBy { name: String },
    #[error("computed-by relations form a cycle: {}", cycle.join(" -> "))]
    CyclicComputedBy { cycle: Vec<String> },
    #[error("{site} reads `{name}`, which is not {allowed}")]
    UnknownRelation { name: String, site: String, allowed: &'static str },
    #[error("update key `{key}` is not among the declared columns")]
    KeyNotInColumns { key: String },
}

/// Reads-from relationships: an edge `(a, b)` means `b` reads `a`. The
/// recursive relation appears as one node even though each iteration
/// rewrites it, so the overall graph may be cyclic; only the subgraph of
/// computed-by temporaries must be acyclic, and `block_order` is a
/// topological order of exactly that subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub block_order: Vec<String>,
}

impl DependencyGraph {
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|(a, b)| a == from && b == to)
    }
}

pub fn validate(ast: &QueryAst, base_tables: &[String]) -> Result<DependencyGraph, Diagnostic> {
    let update_arms = ast
        .arms
        .iter()
        .filter(|(m, _)| matches!(m, UnionMode::UnionByUpdate(_)))
        .count();
    if update_arms > 1 {
        return Err(Diagnostic::MultipleUnionByUpdate);
    }
    if update_arms == 1 && ast.arms.len() > 1 {
        return Err(Diagnostic::MixedUnionModes);
    }
    for (mode, _) in &ast.arms {
        if let UnionMode::UnionByUpdate(key) = mode {
            for attr in key {
                if !ast.columns.contains(attr) {
                    return Err(Diagnostic::KeyNotInColumns { key: attr.clone() });
                }
            }
        }
    }

    let mut block_names: Vec<&str> = Vec::new();
    for block in &ast.computed_by {
        if block_names.contains(&block.name.as_str()) || block.name == ast.recursive_name {
            return Err(Diagnostic::DuplicateComputedBy { name: block.name.clone() });
        }
        block_names.push(&block.name);
    }

    let base: BTreeSet<&str> = base_tables.iter().map(|s| s.as_str()).collect();
    let is_block = |name: &str| block_names.contains(&name);

    let check_reads = |query: &SelectAst,
                       site: String,
                       allow_blocks: bool,
                       allow_recursive: bool|
     -> Result<(), Diagnostic> {
        for read in query.reads() {
            let known = base.contains(read.as_str())
                || (allow_blocks && is_block(&read))
                || (allow_recursive && read == ast.recursive_name);
            if !known {
                let allowed = match (allow_blocks, allow_recursive) {
                    (true, true) => {
                        "a base relation, a computed-by relation, or the recursive relation"
                    }
                    (false, true) => "a base relation or the recursive relation",
                    _ => "a base relation",
                };
                return Err(Diagnostic::UnknownRelation { name: read, site, allowed });
            }
        }
        Ok(())
    };

    check_reads(&ast.initial_query, "the initial query".into(), false, false)?;
    for (i, (_, arm)) in ast.arms.iter().enumerate() {
        check_reads(arm, format!("union arm {}", i + 1), true, true)?;
    }
    for block in &ast.computed_by {
        if block.query.reads().iter().any(|r| *r == block.name) {
            return Err(Diagnostic::RecursiveComputedBy { name: block.name.clone() });
        }
        check_reads(
            &block.query,
            format!("computed-by relation `{}`", block.name),
            true,
            true,
        )?;
    }
    check_reads(&ast.final_query, "the final query".into(), false, true)?;

    // Topological order of the temporaries, stable with respect to
    // declaration order so equal programs always lower identically.
    let index: HashMap<&str, usize> =
        block_names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut needs: Vec<BTreeSet<usize>> = ast
        .computed_by
        .iter()
        .map(|b| {
            b.query
                .reads()
                .iter()
                .filter_map(|r| index.get(r.as_str()).copied())
                .collect()
        })
        .collect();
    let mut placed = vec![false; needs.len()];
    let mut block_order = Vec::with_capacity(needs.len());
    while block_order.len() < needs.len() {
        let next = (0..needs.len()).find(|&i| !placed[i] && needs[i].is_empty());
        match next {
            Some(i) => {
                placed[i] = true;
                block_order.push(block_names[i].to_string());
                for other in needs.iter_mut() {
                    other.remove(&i);
                }
            }
            None => {
                let cycle: Vec<String> = (0..needs.len())
                    .filter(|&i| !placed[i])
                    .map(|i| block_names[i].to_string())
                    .collect();
                return Err(Diagnostic::CyclicComputedBy { cycle });
            }
        }
    }

    let mut nodes: Vec<String> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let add_node = |nodes: &mut Vec<String>, n: String| {
        if !nodes.contains(&n) {
            nodes.push(n);
        }
    };
    let add_edges = |nodes: &mut Vec<String>,
                         edges: &mut Vec<(String, String)>,
                         query: &SelectAst,
                         target: &str| {
        add_node(nodes, target.to_string());
        for read in query.reads() {
            add_node(nodes, read.clone());
            let edge = (read, target.to_string());
            if !edges.contains(&edge) {
                edges.push(edge);
            }
        }
    };
    add_edges(&mut nodes, &mut edges, &ast.initial_query, &ast.recursive_name);
    for block in &ast.computed_by {
        add_edges(&mut nodes, &mut edges, &block.query, &block.name);
    }
    for (_, arm) in &ast.arms {
        add_edges(&mut nodes, &mut edges, arm, &ast.recursive_name);
    }

    Ok(DependencyGraph { nodes, edges, block_order })
}
