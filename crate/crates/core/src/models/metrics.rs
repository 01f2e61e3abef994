//! Hard cluster assignment from a responsibility relation, and external
//! clustering quality measures (purity and normalized mutual information)
//! against a labeled ground truth.

use std::collections::HashMap;

use crate::relation::Relation;
use crate::types::{AttrType, Schema, Value};

use super::ModelError;

/// Collapses a responsibility relation `(id, k, p)` to a hard assignment
/// `(id, k)`: each point goes to its highest-probability component, ties
/// broken toward the smallest component id. Output rows follow the order
/// in which ids first appear.
pub fn cluster_assign(resp: &Relation) -> Result<Relation, ModelError> {
    let schema = resp.schema();
    let id_idx = schema.resolve(None, "id").map_err(ModelError::Data)?;
    let k_idx = schema.resolve(None, "k").map_err(ModelError::Data)?;
    let p_idx = schema.resolve(None, "p").map_err(ModelError::Data)?;

    let mut order = Vec::new();
    let mut best: HashMap<i64, (f64, i64)> = HashMap::new();
    for row in resp.rows() {
        let id = row[id_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[id_idx])))?;
        let k = row[k_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("component id must be an integer, got {}", row[k_idx])))?;
        let p = row[p_idx]
            .as_f64()
            .ok_or_else(|| ModelError::Data(format!("probability must be numeric, got {}", row[p_idx])))?;
        match best.get_mut(&id) {
            None => {
                order.push(id);
                best.insert(id, (p, k));
            }
            Some((bp, bk)) => {
                if p > *bp || (p == *bp && k < *bk) {
                    *bp = p;
                    *bk = k;
                }
            }
        }
    }

    let schema = Schema::from_pairs(&[("id", AttrType::Int), ("k", AttrType::Int)]);
    let rows = order
        .iter()
        .map(|id| vec![Value::Int(*id), Value::Int(best[id].1)])
        .collect();
    Ok(Relation::new(schema, rows).expect("assignments are well-typed"))
}

/// Scores a hard assignment `(id, k)` against ground truth `(id, label)`,
/// returning `(purity, nmi)`. Purity is the fraction of points whose
/// cluster's majority label matches their own; NMI is mutual information
/// normalized by `√(H(clusters)·H(labels))`, taken as 0 when either
/// entropy vanishes.
pub fn evaluate_clustering(clu: &Relation, truth: &Relation) -> Result<(f64, f64), ModelError> {
    let assigned = column_map(clu, "k")?;
    let labels = column_map(truth, "label")?;
    if assigned.len() != labels.len() || assigned.keys().any(|id| !labels.contains_key(id)) {
        return Err(ModelError::Data(
            "assignment and ground truth must cover the same ids".into(),
        ));
    }
    if assigned.is_empty() {
        return Err(ModelError::Data("no points to score".into()));
    }

    let n = assigned.len() as f64;
    let mut joint: HashMap<(i64, i64), f64> = HashMap::new();
    let mut by_cluster: HashMap<i64, f64> = HashMap::new();
    let mut by_label: HashMap<i64, f64> = HashMap::new();
    for (id, &k) in &assigned {
        let t = labels[id];
        *joint.entry((k, t)).or_default() += 1.0;
        *by_cluster.entry(k).or_default() += 1.0;
        *by_label.entry(t).or_default() += 1.0;
    }

    let mut majority: HashMap<i64, f64> = HashMap::new();
    for (&(k, _), &count) in &joint {
        let m = majority.entry(k).or_default();
        *m = m.max(count);
    }
    let purity = majority.values().sum::<f64>() / n;

    let entropy = |counts: &HashMap<i64, f64>| {
        -counts
            .values()
            .map(|&c| {
                let p = c / n;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let h_c = entropy(&by_cluster);
    let h_t = entropy(&by_label);
    let mut info = 0.0;
    for (&(k, t), &count) in &joint {
        let p = count / n;
        info += p * (p / (by_cluster[&k] / n * (by_label[&t] / n))).ln();
    }
    let nmi = if h_c <= 0.0 || h_t <= 0.0 { 0.0 } else { info / (h_c * h_t).sqrt() };
    Ok((purity, nmi))
}

/// Reads an `(id, <value>)` relation into a map, rejecting duplicate ids.
fn column_map(rel: &Relation, value_col: &str) -> Result<HashMap<i64, i64>, ModelError> {
    let schema = rel.schema();
    let id_idx = schema.resolve(None, "id").map_err(ModelError::Data)?;
    let v_idx = schema.resolve(None, value_col).map_err(ModelError::Data)?;
    let mut map = HashMap::new();
    for row in rel.rows() {
        let id = row[id_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[id_idx])))?;
        let v = row[v_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("{value_col} must be an integer, got {}", row[v_idx])))?;
        if map.insert(id, v).is_some() {
            return Err(ModelError::Data(format!("duplicate id {id}")));
        }
    }
    Ok(map)
}
