//! Shared fixtures and independent oracles for the integration suites:
//! a directly-coded Gaussian-mixture EM (no engine, no relations), a
//! breadth-first reachability oracle for transitive closure, dense
//! linear-algebra oracles for the sparse joins, and small relation
//! builders used across the test targets.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixql::eval::{evaluate, Catalog};
use mixql::kernels::{self, DENSITY_FLOOR};
use mixql::sql::{self, corpus};
use mixql::{AttrType, GmmComponent, GmmParams, Matrix, Relation, Schema, Value};

// ---------------------------------------------------------------------------
// Relation builders
// ---------------------------------------------------------------------------

/// `(id, x)` feature relation with vector-valued points.
pub fn points_relation(ids: &[i64], xs: &[Vec<f64>]) -> Relation {
    let d = xs.first().map(|x| x.len()).unwrap_or(1);
    let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(d))]);
    let rows = ids
        .iter()
        .zip(xs)
        .map(|(&id, x)| vec![Value::Int(id), Value::Vector(x.clone())])
        .collect();
    Relation::new(schema, rows).expect("points are finite")
}

/// Edge relation `e(f, t)` over integer node ids.
pub fn edges_relation(edges: &[(i64, i64)]) -> Relation {
    let schema = Schema::from_pairs(&[("f", AttrType::Int), ("t", AttrType::Int)]);
    let rows = edges
        .iter()
        .map(|&(f, t)| vec![Value::Int(f), Value::Int(t)])
        .collect();
    Relation::new(schema, rows).expect("edges are well-typed")
}

/// Extracts a binary integer relation as a set of pairs.
pub fn int_pairs(rel: &Relation) -> BTreeSet<(i64, i64)> {
    rel.rows()
        .iter()
        .map(|row| {
            (
                row[0].as_int().expect("integer column"),
                row[1].as_int().expect("integer column"),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reference Gaussian-mixture EM (plain loops over Vec<f64>, no engine)
// ---------------------------------------------------------------------------

/// Mixture parameters held as bare arrays, component order = component id
/// order (ids are `1..=K` when built through [`RefGmm::to_params`]).
#[derive(Debug, Clone)]
pub struct RefGmm {
    pub pie: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub cov: Vec<Matrix>,
}

impl RefGmm {
    pub fn k(&self) -> usize {
        self.pie.len()
    }

    pub fn from_params(p: &GmmParams) -> RefGmm {
        RefGmm {
            pie: p.components.iter().map(|c| c.pie).collect(),
            mean: p.components.iter().map(|c| c.mean.clone()).collect(),
            cov: p.components.iter().map(|c| c.cov.clone()).collect(),
        }
    }

    pub fn to_params(&self) -> GmmParams {
        GmmParams {
            components: (0..self.k())
                .map(|i| GmmComponent {
                    k: i as i64 + 1,
                    pie: self.pie[i],
                    mean: self.mean[i].clone(),
                    cov: self.cov[i].clone(),
                })
                .collect(),
        }
    }

    /// Largest absolute difference across every parameter entry, matching
    /// components positionally (both sides are in ascending id order).
    pub fn max_deviation(&self, other: &GmmParams) -> f64 {
        assert_eq!(self.k(), other.components.len(), "component counts differ");
        let mut dev: f64 = 0.0;
        for (i, c) in other.components.iter().enumerate() {
            dev = dev.max((self.pie[i] - c.pie).abs());
            for (a, b) in self.mean[i].iter().zip(&c.mean) {
                dev = dev.max((a - b).abs());
            }
            for (a, b) in self.cov[i].data().iter().zip(c.cov.data()) {
                dev = dev.max((a - b).abs());
            }
        }
        dev
    }
}

/// The variance floor the trainer derives from its data: square of 1e-6
/// times the widest single-dimension range, never below 1e-12.
pub fn ref_variance_floor(xs: &[Vec<f64>]) -> f64 {
    let d = xs[0].len();
    let mut range: f64 = 0.0;
    for j in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in xs {
            lo = lo.min(x[j]);
            hi = hi.max(x[j]);
        }
        range = range.max(hi - lo);
    }
    (1e-6 * range).powi(2).max(1e-12)
}

/// One EM iteration written as straight-line loops. The update is the
/// textbook one: responsibilities by Bayes rule, then weighted moments,
/// with the covariance floored the same way the engine's `regcov` floors
/// it. Accumulation orders are the natural ones (components outer, data
/// rows inner, ascending), which is also what a sequential scan of the
/// training query's intermediate relations produces.
pub fn ref_gmm_step(xs: &[Vec<f64>], m: &RefGmm, vfloor: f64) -> RefGmm {
    let kk = m.k();
    let n = xs.len();
    let d = xs[0].len();

    // E-step: weighted densities, per-point totals accumulated with the
    // component loop outermost, then the pointwise normalization.
    let mut dens = vec![vec![0.0; n]; kk];
    let mut denom = vec![0.0; n];
    for k in 0..kk {
        for (i, x) in xs.iter().enumerate() {
            let w = m.pie[k] * kernels::norm_pdf(x, &m.mean[k], &m.cov[k]).expect("valid density");
            dens[k][i] = w;
            denom[i] += w;
        }
    }
    let mut resp = vec![vec![0.0; n]; kk];
    for k in 0..kk {
        for i in 0..n {
            resp[k][i] = dens[k][i] / denom[i];
        }
    }

    // M-step: for each component, the responsibility mass, the weighted
    // mean, and the weighted scatter around that new mean.
    let mut out = RefGmm { pie: Vec::new(), mean: Vec::new(), cov: Vec::new() };
    for k in 0..kk {
        let mut n_k = 0.0;
        for i in 0..n {
            n_k += resp[k][i];
        }
        let mut s1 = vec![0.0; d];
        for (i, x) in xs.iter().enumerate() {
            for j in 0..d {
                s1[j] += resp[k][i] * x[j];
            }
        }
        let inv = 1.0 / n_k;
        let mean: Vec<f64> = s1.iter().map(|v| v * inv).collect();

        let mut scatter = Matrix::zeros(d);
        for (i, x) in xs.iter().enumerate() {
            for j in 0..d {
                for l in 0..d {
                    scatter[(j, l)] += resp[k][i] * ((x[j] - mean[j]) * (x[l] - mean[l]));
                }
            }
        }
        let mut cov = Matrix::zeros(d);
        for j in 0..d {
            for l in 0..d {
                cov[(j, l)] = scatter[(j, l)] * inv;
            }
        }
        let cov = kernels::regularize_cov(&cov, vfloor);

        out.pie.push(n_k / n as f64);
        out.mean.push(mean);
        out.cov.push(cov);
    }
    out
}

/// `Σ_i ln p(x_i)` with the mixture density floored exactly like the
/// model view's scorer floors it.
pub fn ref_log_likelihood(xs: &[Vec<f64>], m: &RefGmm) -> f64 {
    let mut total = 0.0;
    for x in xs {
        let mut p = 0.0;
        for k in 0..m.k() {
            p += m.pie[k] * kernels::norm_pdf(x, &m.mean[k], &m.cov[k]).expect("valid density");
        }
        total += p.max(DENSITY_FLOOR).ln();
    }
    total
}

// ---------------------------------------------------------------------------
// Transitive closure: engine run and reachability oracle
// ---------------------------------------------------------------------------

/// Random digraph: node count in `1..=max_nodes`, every ordered pair
/// (self-loops included) kept with one shared probability.
pub fn random_digraph(rng: &mut ChaCha8Rng, max_nodes: usize) -> Vec<(i64, i64)> {
    let nodes = rng.gen_range(1..=max_nodes) as i64;
    let p: f64 = rng.gen_range(0.05..0.35);
    let mut edges = Vec::new();
    for f in 0..nodes {
        for t in 0..nodes {
            if rng.gen::<f64>() < p {
                edges.push((f, t));
            }
        }
    }
    edges
}

/// Pairs `(f, t)` such that `t` is reachable from `f` along one or more
/// edges, by breadth-first search from every node.
pub fn bfs_closure(edges: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let mut adj: HashMap<i64, Vec<i64>> = HashMap::new();
    let mut nodes: BTreeSet<i64> = BTreeSet::new();
    for &(f, t) in edges {
        adj.entry(f).or_default().push(t);
        nodes.insert(f);
        nodes.insert(t);
    }
    let mut closure = BTreeSet::new();
    for &start in &nodes {
        let mut seen: HashSet<i64> = HashSet::new();
        let mut queue: VecDeque<i64> = VecDeque::new();
        // Seed with the direct successors so the pair (start, start) only
        // appears when a cycle actually returns to the start.
        for &t in adj.get(&start).map(|v| v.as_slice()).unwrap_or(&[]) {
            if seen.insert(t) {
                queue.push_back(t);
                closure.insert((start, t));
            }
        }
        while let Some(u) = queue.pop_front() {
            for &t in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
                if seen.insert(t) {
                    queue.push_back(t);
                    closure.insert((start, t));
                }
            }
        }
    }
    closure
}

/// Runs the canonical transitive-closure statement over the given edges.
pub fn tc_via_engine(edges: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let ast = sql::parse(corpus::TC_TEXT).expect("closure statement parses");
    let graph = sql::validate(&ast, &["e".to_string()]).expect("closure statement validates");
    let plan = sql::lower(&ast, &graph).expect("closure statement lowers");
    let mut db = Catalog::new();
    db.insert("e", edges_relation(edges));
    let (result, _) = evaluate(&plan, &db).expect("closure evaluates");
    int_pairs(&result)
}

// ---------------------------------------------------------------------------
// Union-by-update: primitive set-operation oracle
// ---------------------------------------------------------------------------

/// `(r − (r ⋉ s)) ∪ s` over the key columns: drop every `r` row whose key
/// appears in `s` (the semijoin), then add all of `s`.
pub fn ubu_oracle(r: &Relation, s: &Relation, key_cols: &[usize]) -> Vec<Vec<Value>> {
    let key_of = |row: &[Value]| -> Vec<Value> { key_cols.iter().map(|&i| row[i].clone()).collect() };
    let updated: HashSet<Vec<Value>> = s.rows().iter().map(|row| key_of(row)).collect();
    let mut rows: Vec<Vec<Value>> = r
        .rows()
        .iter()
        .filter(|row| !updated.contains(&key_of(row)))
        .cloned()
        .collect();
    rows.extend(s.rows().iter().cloned());
    rows
}

/// Sorted copies for order-insensitive exact comparison.
pub fn canonical(rows: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out: Vec<Vec<Value>> = rows.to_vec();
    out.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            let c = x.cmp_total(y);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        std::cmp::Ordering::Equal
    });
    out
}

/// Random pair of key-unique relations over schema `(k int, a real, b int)`
/// with overlapping key ranges.
pub fn random_keyed_pair(rng: &mut ChaCha8Rng) -> (Relation, Relation) {
    let schema = Schema::from_pairs(&[
        ("k", AttrType::Int),
        ("a", AttrType::Real),
        ("b", AttrType::Int),
    ]);
    let mut make = |rng: &mut ChaCha8Rng| {
        let mut keys: Vec<i64> = (0..24).collect();
        keys.shuffle(rng);
        let count = rng.gen_range(0..=12);
        let rows = keys[..count]
            .iter()
            .map(|&k| {
                vec![
                    Value::Int(k),
                    Value::Real((rng.gen::<f64>() * 8.0).round() / 4.0),
                    Value::Int(rng.gen_range(-3..3)),
                ]
            })
            .collect();
        Relation::new(schema.clone(), rows).expect("rows are well-typed")
    };
    (make(rng), make(rng))
}

// ---------------------------------------------------------------------------
// Sparse linear-algebra joins: dense oracles
// ---------------------------------------------------------------------------

/// Dense random matrix with integer entries in `[-2, 2]`; roughly half the
/// entries are zero so the sparse encodings genuinely omit cells.
pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| if rng.gen::<f64>() < 0.5 { 0.0 } else { rng.gen_range(-2..=2) as f64 })
                .collect()
        })
        .collect()
}

/// Coordinate-form relation of a dense matrix, omitting zero entries.
pub fn sparse_matrix(dense: &[Vec<f64>], i_name: &str, j_name: &str) -> Relation {
    let schema = Schema::from_pairs(&[
        (i_name, AttrType::Int),
        (j_name, AttrType::Int),
        ("v", AttrType::Real),
    ]);
    let mut rows = Vec::new();
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                rows.push(vec![Value::Int(i as i64), Value::Int(j as i64), Value::Real(v)]);
            }
        }
    }
    Relation::new(schema, rows).expect("coordinates are well-typed")
}

/// Coordinate-form relation of a dense vector, omitting zero entries.
pub fn sparse_vector(dense: &[f64], j_name: &str) -> Relation {
    let schema = Schema::from_pairs(&[(j_name, AttrType::Int), ("v", AttrType::Real)]);
    let rows = dense
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != 0.0)
        .map(|(j, &v)| vec![Value::Int(j as i64), Value::Real(v)])
        .collect();
    Relation::new(schema, rows).expect("coordinates are well-typed")
}

/// Reads a sparse result with one integer index column into a map.
pub fn sparse_result_1d(rel: &Relation) -> HashMap<i64, f64> {
    rel.rows()
        .iter()
        .map(|row| {
            (
                row[0].as_int().expect("index column"),
                row[1].as_f64().expect("value column"),
            )
        })
        .collect()
}

/// Reads a sparse result with two integer index columns into a map.
pub fn sparse_result_2d(rel: &Relation) -> HashMap<(i64, i64), f64> {
    rel.rows()
        .iter()
        .map(|row| {
            (
                (
                    row[0].as_int().expect("row index"),
                    row[1].as_int().expect("column index"),
                ),
                row[2].as_f64().expect("value column"),
            )
        })
        .collect()
}

pub fn dense_mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn dense_mat_mat(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = b.len();
    let q = b[0].len();
    a.iter()
        .map(|row| {
            (0..q)
                .map(|j| (0..p).map(|l| row[l] * b[l][j]).sum())
                .collect()
        })
        .collect()
}

/// Row sums of the Hadamard product.
pub fn dense_hadamard_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum())
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic training fixtures
// ---------------------------------------------------------------------------

/// Gaussian blob data plus a provided initialization whose means sit at
/// jittered copies of the true centers. Both sides of an engine-versus-
/// reference comparison start from exactly this relation.
pub fn blobs_with_init(
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    spread: f64,
    sigma: f64,
) -> (Relation, GmmParams) {
    let hi = 10.0 * k as f64;
    let data = mixql::synth::gaussian_blobs(n, d, k, seed, 0.0, hi, sigma);
    let centers = mixql::synth::blob_centers(d, k, seed, 0.0, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let components = (0..k)
        .map(|i| GmmComponent {
            k: i as i64 + 1,
            pie: 1.0 / k as f64,
            mean: centers[i].iter().map(|c| c + rng.gen_range(-spread..spread)).collect(),
            cov: Matrix::identity(d),
        })
        .collect();
    (data, GmmParams { components })
}

/// Minimum pairwise distance between the true blob centers — the
/// separation measure behind the "well separated" convergence claim.
pub fn min_center_gap(d: usize, k: usize, seed: u64, lo: f64, hi: f64) -> f64 {
    let centers = mixql::synth::blob_centers(d, k, seed, lo, hi);
    let mut gap = f64::INFINITY;
    for i in 0..centers.len() {
        for j in 0..i {
            let dist: f64 = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            gap = gap.min(dist);
        }
    }
    gap
}

/// Feature points of an `(id, x)` relation as bare vectors, in row order.
pub fn feature_vectors(rel: &Relation) -> Vec<Vec<f64>> {
    let idx = rel.schema().resolve(None, "x").expect("feature column");
    rel.rows()
        .iter()
        .map(|row| match &row[idx] {
            Value::Vector(v) => v.clone(),
            other => vec![other.as_f64().expect("scalar feature")],
        })
        .collect()
}
