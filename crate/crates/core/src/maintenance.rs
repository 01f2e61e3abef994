//! Incremental maintenance of Gaussian-mixture model views.
//!
//! A fitted mixture is summarized by per-component sufficient statistics
//! `(n_k, s1_k, s2_k)`; inserting or deleting base rows adjusts those sums
//! with the points' posterior contributions instead of retraining. An
//! optional stochastic refinement then sweeps a small staged relation X′
//! (ambiguous retained points plus the new rows) in seeded-random order,
//! replacing each point's cached contribution with one computed under the
//! current parameters and refreshing the parameters after every point.
//! [`ModelDb`] wires the whole pipeline to insert/delete statements as a
//! statement-scoped trigger cascade: selection (T1, once, before), staging
//! (T2, per row, before), refinement (T3, once, after).

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernels::{self, regularize_cov};
use crate::models::{
    variance_floor, vector_points, GmmComponent, GmmParams, ModelError, Points,
};
use crate::relation::Relation;
use crate::types::{AttrType, Matrix, Schema, Value};

/// Sufficient statistics of one mixture component: responsibility mass
/// `n_k = Σ_i p(z_ik)`, weighted sum `s1 = Σ_i p(z_ik)·x_i`, and weighted
/// second moment `s2 = Σ_i p(z_ik)·x_i·x_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    pub k: i64,
    pub n_k: f64,
    pub s1: Vec<f64>,
    pub s2: Matrix,
}

/// Per-component sufficient statistics plus the total point count and the
/// variance floor the source data implies, components in ascending `k`
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub components: Vec<ComponentStats>,
    pub n: f64,
    pub var_floor: f64,
}

impl SuffStats {
    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.s1.len()).unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Checks the defining invariants: masses account for every point
    /// (`Σ_k n_k = n` within 1e-6) and second moments stay symmetric
    /// within 1e-9.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mass: f64 = self.components.iter().map(|c| c.n_k).sum();
        if (mass - self.n).abs() > 1e-6 {
            return Err(ModelError::Data(format!(
                "component masses sum to {mass} but {} points are recorded",
                self.n
            )));
        }
        for c in &self.components {
            if max_asymmetry(&c.s2) > 1e-9 {
                return Err(ModelError::Data(format!(
                    "component {}: second moment drifted from symmetric",
                    c.k
                )));
            }
        }
        Ok(())
    }

    /// Relation form `(k, n_k, s1, s2, n, var_floor)` for persistence. The
    /// totals are per-mixture, not per-component, so they repeat on every
    /// row; [`SuffStats::from_relation`] checks they agree.
    pub fn to_relation(&self) -> Relation {
        let d = self.dim();
        let schema = Schema::from_pairs(&[
            ("k", AttrType::Int),
            ("n_k", AttrType::Real),
            ("s1", AttrType::Vector(d)),
            ("s2", AttrType::Matrix(d)),
            ("n", AttrType::Real),
            ("var_floor", AttrType::Real),
        ]);
        let rows = self
            .components
            .iter()
            .map(|c| {
                vec![
                    Value::Int(c.k),
                    Value::Real(c.n_k),
                    Value::Vector(c.s1.clone()),
                    Value::Matrix(c.s2.clone()),
                    Value::Real(self.n),
                    Value::Real(self.var_floor),
                ]
            })
            .collect();
        Relation::new(schema, rows).expect("statistics are finite")
    }

    pub fn from_relation(rel: &Relation) -> Result<Self, ModelError> {
        let schema = rel.schema();
        let k_idx = schema.resolve(None, "k").map_err(ModelError::Data)?;
        let nk_idx = schema.resolve(None, "n_k").map_err(ModelError::Data)?;
        let s1_idx = schema.resolve(None, "s1").map_err(ModelError::Data)?;
        let s2_idx = schema.resolve(None, "s2").map_err(ModelError::Data)?;
        let n_idx = schema.resolve(None, "n").map_err(ModelError::Data)?;
        let vf_idx = schema.resolve(None, "var_floor").map_err(ModelError::Data)?;
        if rel.is_empty() {
            return Err(ModelError::Data("no component statistics".into()));
        }
        let mut components = Vec::with_capacity(rel.len());
        let mut totals = None;
        for row in rel.rows() {
            let k = row[k_idx]
                .as_int()
                .ok_or_else(|| ModelError::Data(format!("component id {} is not an integer", row[k_idx])))?;
            let n_k = row[nk_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Data(format!("mass {} is not numeric", row[nk_idx])))?;
            let s1 = row[s1_idx]
                .as_vector()
                .ok_or_else(|| ModelError::Data(format!("first moment {} is not a vector", row[s1_idx])))?
                .to_vec();
            let s2 = row[s2_idx]
                .as_matrix()
                .ok_or_else(|| ModelError::Data(format!("second moment {} is not a matrix", row[s2_idx])))?
                .clone();
            if s2.dim() != s1.len() {
                return Err(ModelError::Data(format!(
                    "component {k}: first moment has {} entries but second moment is {}x{}",
                    s1.len(),
                    s2.dim(),
                    s2.dim()
                )));
            }
            let n = row[n_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Data(format!("point count {} is not numeric", row[n_idx])))?;
            let var_floor = row[vf_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Data(format!("variance floor {} is not numeric", row[vf_idx])))?;
            match totals {
                None => totals = Some((n, var_floor)),
                Some(t) if t != (n, var_floor) => {
                    return Err(ModelError::Data(
                        "rows disagree on the mixture totals".into(),
                    ))
                }
                Some(_) => {}
            }
            components.push(ComponentStats { k, n_k, s1, s2 });
        }
        components.sort_by_key(|c| c.k);
        if components.windows(2).any(|w| w[0].k == w[1].k) {
            return Err(ModelError::Data("duplicate component ids".into()));
        }
        if components.windows(2).any(|w| w[0].s1.len() != w[1].s1.len()) {
            return Err(ModelError::Data("components disagree on dimension".into()));
        }
        let (n, var_floor) = totals.expect("at least one row was parsed");
        Ok(SuffStats { components, n, var_floor })
    }
}

fn max_asymmetry(m: &Matrix) -> f64 {
    let d = m.dim();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Builds the sufficient statistics of a model over its data from the
/// E-step responsibilities `r(id, k, p)` — exactly one row per point and
/// component, each point's probabilities summing to 1.
pub fn stats_from_model(
    params: &GmmParams,
    x: &Relation,
    r: &Relation,
) -> Result<SuffStats, ModelError> {
    let pts = vector_points(x)?;
    if pts.d != params.dim() {
        return Err(ModelError::Data(format!(
            "data is {}-dimensional but the model is {}-dimensional",
            pts.d,
            params.dim()
        )));
    }
    let d = pts.d;
    let point_of: HashMap<i64, usize> =
        pts.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let slot_of: HashMap<i64, usize> = params
        .components
        .iter()
        .enumerate()
        .map(|(s, c)| (c.k, s))
        .collect();

    let schema = r.schema();
    let id_idx = schema.resolve(None, "id").map_err(ModelError::Data)?;
    let k_idx = schema.resolve(None, "k").map_err(ModelError::Data)?;
    let p_idx = schema.resolve(None, "p").map_err(ModelError::Data)?;

    let mut components: Vec<ComponentStats> = params
        .components
        .iter()
        .map(|c| ComponentStats {
            k: c.k,
            n_k: 0.0,
            s1: vec![0.0; d],
            s2: Matrix::zeros(d),
        })
        .collect();
    let mut seen = HashSet::new();
    let mut row_mass: HashMap<i64, f64> = HashMap::new();
    for row in r.rows() {
        let id = row[id_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[id_idx])))?;
        let k = row[k_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("component id must be an integer, got {}", row[k_idx])))?;
        let p = row[p_idx]
            .as_f64()
            .ok_or_else(|| ModelError::Data(format!("probability must be numeric, got {}", row[p_idx])))?;
        let &i = point_of
            .get(&id)
            .ok_or_else(|| ModelError::Data(format!("responsibilities mention unknown id {id}")))?;
        let &slot = slot_of
            .get(&k)
            .ok_or_else(|| ModelError::Data(format!("responsibilities mention unknown component {k}")))?;
        if !seen.insert((id, k)) {
            return Err(ModelError::Data(format!(
                "duplicate responsibility for id {id}, component {k}"
            )));
        }
        let x = &pts.xs[i];
        let c = &mut components[slot];
        c.n_k += p;
        for j in 0..d {
            c.s1[j] += p * x[j];
            for l in 0..d {
                c.s2[(j, l)] += p * x[j] * x[l];
            }
        }
        *row_mass.entry(id).or_default() += p;
    }
    if seen.len() != pts.len() * params.component_count() {
        return Err(ModelError::Data(format!(
            "expected {} responsibility rows, got {}",
            pts.len() * params.component_count(),
            seen.len()
        )));
    }
    if let Some((id, mass)) = row_mass.iter().find(|(_, &m)| (m - 1.0).abs() > 1e-6) {
        return Err(ModelError::Data(format!(
            "responsibilities for id {id} sum to {mass}"
        )));
    }
    Ok(SuffStats {
        components,
        n: pts.len() as f64,
        var_floor: variance_floor(&pts),
    })
}

/// Recovers mixture parameters from sufficient statistics: `μ_k = s1_k/n_k`,
/// `π_k = n_k/n`, `σ_k = s2_k/n_k − μ_k μ_kᵀ` (symmetrized, then floored).
pub fn params_from_stats(s: &SuffStats) -> Result<GmmParams, ModelError> {
    let mut components = Vec::with_capacity(s.component_count());
    for c in &s.components {
        if !(c.n_k > 0.0) {
            return Err(ModelError::EmptyComponent { k: c.k });
        }
        components.push(recover_component(c, s.n, s.var_floor));
    }
    Ok(GmmParams { components })
}

/// The M-step recovery of one component with positive mass.
fn recover_component(c: &ComponentStats, n: f64, var_floor: f64) -> GmmComponent {
    let d = c.s1.len();
    let mean: Vec<f64> = c.s1.iter().map(|v| v / c.n_k).collect();
    let mut cov = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            cov[(i, j)] = c.s2[(i, j)] / c.n_k - mean[i] * mean[j];
        }
    }
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    GmmComponent { k: c.k, pie: c.n_k / n, mean, cov: regularize_cov(&cov, var_floor) }
}

/// Which points an update should keep around for refinement.
#[derive(Debug, Clone)]
pub enum SelectionStrategy {
    /// Keep points that are not safely inside exactly one component —
    /// within `radius` (Mahalanobis) of two or more components, or of
    /// none.
    DistanceBased { radius: f64 },
    /// Keep the points with the highest posterior entropy.
    EntropyBased,
}

#[derive(Debug, Clone)]
pub struct SelectionPolicy {
    pub strategy: SelectionStrategy,
    /// Maximum number of original points retained.
    pub budget: usize,
}

/// Selects the original points whose membership is unstable enough to
/// revisit during refinement. Candidates are ranked by posterior entropy
/// (ties toward smaller id) and capped at the policy's budget; the result
/// keeps the input relation's schema.
pub fn select_retain_set(
    x: &Relation,
    params: &GmmParams,
    policy: &SelectionPolicy,
) -> Result<Relation, ModelError> {
    let pts = vector_points(x)?;
    if pts.d != params.dim() {
        return Err(ModelError::Data(format!(
            "data is {}-dimensional but the model is {}-dimensional",
            pts.d,
            params.dim()
        )));
    }
    // (entropy, id, row index) per candidate.
    let mut candidates = Vec::new();
    for (i, point) in pts.xs.iter().enumerate() {
        let keep = match &policy.strategy {
            SelectionStrategy::EntropyBased => true,
            SelectionStrategy::DistanceBased { radius } => {
                let mut inside = 0usize;
                for c in &params.components {
                    if kernels::mahalanobis(point, &c.mean, &c.cov)? <= *radius {
                        inside += 1;
                    }
                }
                inside != 1
            }
        };
        if keep {
            let h = kernels::entropy(&params.point_posterior(point)?)?;
            candidates.push((h, pts.ids[i], i));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.truncate(policy.budget);
    let rows = candidates
        .iter()
        .map(|&(_, _, i)| x.rows()[i].clone())
        .collect();
    Ok(Relation::new(x.schema().clone(), rows).expect("rows come from a valid relation"))
}

/// Folds `m` inserted points into the statistics under the current
/// parameters, refreshes the parameters once, then runs `t_passes` sweeps
/// of stochastic refinement over the staged relation `x_prime` (the
/// retain set plus the inserted rows).
pub fn model_update(
    params: &GmmParams,
    stats: &SuffStats,
    x_prime: &Relation,
    inserted: &Relation,
    t_passes: u32,
    seed: u64,
) -> Result<(GmmParams, SuffStats), ModelError> {
    apply_delta(params, stats, inserted, 1.0, x_prime, t_passes, seed)
}

/// Removes `m` deleted points' contributions (their posteriors under the
/// pre-update parameters), refreshes once, then refines over `x_prime`
/// exactly as [`model_update`] does.
pub fn model_downdate(
    params: &GmmParams,
    stats: &SuffStats,
    deleted: &Relation,
    x_prime: &Relation,
    t_passes: u32,
    seed: u64,
) -> Result<(GmmParams, SuffStats), ModelError> {
    apply_delta(params, stats, deleted, -1.0, x_prime, t_passes, seed)
}

fn apply_delta(
    params: &GmmParams,
    stats: &SuffStats,
    delta_rows: &Relation,
    sign: f64,
    x_prime: &Relation,
    t_passes: u32,
    seed: u64,
) -> Result<(GmmParams, SuffStats), ModelError> {
    check_shapes(params, stats)?;
    let theta0 = params.clone();
    let mut params = params.clone();
    let mut stats = stats.clone();

    // Contribution shift for the changed rows, all under the entry
    // parameters; one refresh afterwards. An empty delta with no passes
    // must stay bitwise untouched, so the refresh is skipped then.
    if let Some(delta) = maybe_points(delta_rows, params.dim())? {
        for x in &delta.xs {
            let probs = theta0.point_posterior(x)?;
            add_point(&mut stats, x, &probs, sign);
        }
        stats.n += sign * delta.len() as f64;
        params = refresh_params(&stats, &params)?;
    }

    if t_passes > 0 {
        if let Some(xp) = maybe_points(x_prime, params.dim())? {
            // Cached "previous" contributions: every staged point's
            // posterior under the entry parameters, which is what its
            // current contribution inside the statistics was computed
            // with.
            let mut cache: HashMap<i64, Vec<f64>> = HashMap::new();
            for (i, x) in xp.xs.iter().enumerate() {
                cache.insert(xp.ids[i], theta0.point_posterior(x)?);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..xp.len()).collect();
            for _ in 0..t_passes {
                order.shuffle(&mut rng);
                for &i in &order {
                    let x = &xp.xs[i];
                    let fresh = params.point_posterior(x)?;
                    let old = cache.insert(xp.ids[i], fresh.clone()).expect("cache is pre-seeded");
                    add_point(&mut stats, x, &old, -1.0);
                    add_point(&mut stats, x, &fresh, 1.0);
                    params = refresh_params(&stats, &params)?;
                }
            }
        }
    }
    Ok((params, stats))
}

/// The parameter refresh used inside updates. Unlike the strict
/// [`params_from_stats`], a component whose mass has been (legitimately)
/// driven to zero — deleting its whole cluster does that — keeps its
/// previous shape with its prior clamped to the remaining mass, so the
/// other components come through untouched. A materially negative mass
/// still signals inconsistent statistics.
fn refresh_params(stats: &SuffStats, previous: &GmmParams) -> Result<GmmParams, ModelError> {
    if !(stats.n > 0.0) {
        return Err(ModelError::Data("no points remain in the statistics".into()));
    }
    let mut components = Vec::with_capacity(stats.component_count());
    for (c, prev) in stats.components.iter().zip(&previous.components) {
        if c.n_k < -1e-6 {
            return Err(ModelError::EmptyComponent { k: c.k });
        }
        if c.n_k <= crate::models::EMPTY_COMPONENT_MASS {
            components.push(GmmComponent {
                k: c.k,
                pie: c.n_k.max(0.0) / stats.n,
                mean: prev.mean.clone(),
                cov: prev.cov.clone(),
            });
        } else {
            components.push(recover_component(c, stats.n, stats.var_floor));
        }
    }
    Ok(GmmParams { components })
}

/// Adds (`sign` = 1) or removes (`sign` = −1) one point's weighted
/// contribution from every component's sums.
fn add_point(stats: &mut SuffStats, x: &[f64], probs: &[f64], sign: f64) {
    let d = x.len();
    for (c, &p) in stats.components.iter_mut().zip(probs) {
        let w = sign * p;
        c.n_k += w;
        for j in 0..d {
            c.s1[j] += w * x[j];
            for l in 0..d {
                c.s2[(j, l)] += w * x[j] * x[l];
            }
        }
    }
}

fn check_shapes(params: &GmmParams, stats: &SuffStats) -> Result<(), ModelError> {
    let aligned = params.component_count() == stats.component_count()
        && params.dim() == stats.dim()
        && params
            .components
            .iter()
            .zip(&stats.components)
            .all(|(p, s)| p.k == s.k);
    if !aligned {
        return Err(ModelError::Data(
            "parameters and sufficient statistics disagree on components".into(),
        ));
    }
    Ok(())
}

/// [`vector_points`] that tolerates an empty relation (no-op deltas).
fn maybe_points(rel: &Relation, dim: usize) -> Result<Option<Points>, ModelError> {
    if rel.len() == 0 {
        return Ok(None);
    }
    let pts = vector_points(rel)?;
    if pts.d != dim {
        return Err(ModelError::Data(format!(
            "data is {}-dimensional but the model is {dim}-dimensional",
            pts.d
        )));
    }
    Ok(Some(pts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerTiming {
    BeforeStatement,
    BeforeEachRow,
    AfterStatement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerAction {
    SelectRetainSet,
    StageIncomingRow,
    RunModelUpdate,
}

/// One trigger of the maintenance cascade.
#[derive(Debug, Clone)]
pub struct Trigger {
    pub timing: TriggerTiming,
    pub action: TriggerAction,
}

/// The three triggers [`attach_triggers`] installs on a table: selection
/// once before the statement, staging per incoming row, refinement once
/// after.
#[derive(Debug, Clone)]
pub struct TriggerSet {
    pub table: String,
    pub view: String,
    pub t1: Trigger,
    pub t2: Trigger,
    pub t3: Trigger,
}

/// Wall time and resulting model quality of one maintenance statement.
#[derive(Debug, Clone)]
pub struct MaintenanceReport {
    pub wall_millis: f64,
    /// Log-likelihood of the updated view over the post-statement table.
    pub post_ll: f64,
}

/// A maintained model view: its current parameters and statistics, plus
/// the trigger binding when one is attached.
#[derive(Debug, Clone)]
pub struct MaintainedView {
    pub params: GmmParams,
    pub stats: SuffStats,
    binding: Option<Binding>,
    staging: Option<Relation>,
}

#[derive(Debug, Clone)]
struct Binding {
    policy: SelectionPolicy,
    t_passes: u32,
    base_seed: u64,
    /// Statements processed so far; each uses `base_seed + statements` so
    /// a replayed sequence is reproducible.
    statements: u64,
}

/// Base tables and maintained model views under trigger control. Inserts
/// and deletes on a bound table transparently run the selection/staging/
/// refinement cascade and report the maintenance cost.
#[derive(Debug, Default)]
pub struct ModelDb {
    tables: HashMap<String, Relation>,
    views: HashMap<String, MaintainedView>,
    bindings: HashMap<String, String>,
    firings: Vec<&'static str>,
}

impl ModelDb {
    pub fn new() -> Self {
        ModelDb::default()
    }

    pub fn register_table(&mut self, name: &str, rel: Relation) {
        self.tables.insert(name.to_string(), rel);
    }

    pub fn register_view(
        &mut self,
        name: &str,
        params: GmmParams,
        stats: SuffStats,
    ) -> Result<(), ModelError> {
        check_shapes(&params, &stats)?;
        self.views.insert(
            name.to_string(),
            MaintainedView { params, stats, binding: None, staging: None },
        );
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Relation> {
        self.tables.get(name)
    }

    pub fn view(&self, name: &str) -> Option<&MaintainedView> {
        self.views.get(name)
    }

    /// The staged X′ of a view; statement-scoped, so `None` whenever no
    /// statement is in flight.
    pub fn staging(&self, view: &str) -> Option<&Relation> {
        self.views.get(view).and_then(|v| v.staging.as_ref())
    }

    /// Trigger fire log of the most recent maintained statement.
    pub fn last_firings(&self) -> &[&'static str] {
        &self.firings
    }

    /// Appends rows to a table; when the table backs a model view, the
    /// trigger cascade maintains the view and reports the cost.
    pub fn insert_rows(
        &mut self,
        table: &str,
        rows: &Relation,
    ) -> Result<Option<MaintenanceReport>, ModelError> {
        let current = self
            .tables
            .get(table)
            .ok_or_else(|| ModelError::Config(format!("unknown table `{table}`")))?
            .clone();
        let Some(view_name) = self.bindings.get(table).cloned() else {
            self.tables.insert(table.to_string(), current.concat(rows)?);
            return Ok(None);
        };
        let started = Instant::now();
        self.firings.clear();
        let view = self.views.get_mut(&view_name).expect("binding targets a registered view");
        let (policy, t_passes, seed) = {
            let b = view.binding.as_ref().expect("bound view has a binding");
            (b.policy.clone(), b.t_passes, b.base_seed + b.statements)
        };

        reject_known_ids(&current, rows)?;

        // T1, before the statement: stage the unstable original points.
        let keep = select_retain_set(&current, &view.params, &policy)?;
        self.firings.push("t1");
        // T2, before each row: stage the incoming row.
        let mut staged = keep.rows().to_vec();
        for row in rows.rows() {
            staged.push(row.clone());
            self.firings.push("t2");
        }
        let x_prime = Relation::new(current.schema().clone(), staged)
            .map_err(|e| ModelError::Data(e.to_string()))?;
        view.staging = Some(x_prime.clone());

        // The insert itself.
        let updated_table = current.concat(rows)?;

        // T3, after the statement: fold the delta in and refine.
        let (params, stats) =
            model_update(&view.params, &view.stats, &x_prime, rows, t_passes, seed)?;
        self.firings.push("t3");

        view.params = params;
        view.stats = stats;
        view.staging = None;
        view.binding.as_mut().expect("still bound").statements += 1;
        let post_ll = view.params.log_likelihood(&updated_table)?;
        self.tables.insert(table.to_string(), updated_table);
        Ok(Some(MaintenanceReport {
            wall_millis: started.elapsed().as_secs_f64() * 1e3,
            post_ll,
        }))
    }

    /// Deletes rows by id; when the table backs a model view, the deleted
    /// contributions are subtracted and the view refined over the retain
    /// set of the remaining data.
    pub fn delete_ids(
        &mut self,
        table: &str,
        ids: &[i64],
    ) -> Result<Option<MaintenanceReport>, ModelError> {
        let current = self
            .tables
            .get(table)
            .ok_or_else(|| ModelError::Config(format!("unknown table `{table}`")))?
            .clone();
        let (deleted, remaining) = split_by_ids(&current, ids)?;
        let Some(view_name) = self.bindings.get(table).cloned() else {
            self.tables.insert(table.to_string(), remaining);
            return Ok(None);
        };
        if remaining.len() == 0 {
            return Err(ModelError::Data(
                "cannot delete every row of a table backing a model view".into(),
            ));
        }
        let started = Instant::now();
        self.firings.clear();
        let view = self.views.get_mut(&view_name).expect("binding targets a registered view");
        let (policy, t_passes, seed) = {
            let b = view.binding.as_ref().expect("bound view has a binding");
            (b.policy.clone(), b.t_passes, b.base_seed + b.statements)
        };

        // T1, before the statement: stage unstable points that survive.
        let keep = select_retain_set(&remaining, &view.params, &policy)?;
        self.firings.push("t1");
        view.staging = Some(keep.clone());

        // T3, after the statement: subtract the delta and refine.
        let (params, stats) =
            model_downdate(&view.params, &view.stats, &deleted, &keep, t_passes, seed)?;
        self.firings.push("t3");

        view.params = params;
        view.stats = stats;
        view.staging = None;
        view.binding.as_mut().expect("still bound").statements += 1;
        let post_ll = view.params.log_likelihood(&remaining)?;
        self.tables.insert(table.to_string(), remaining);
        Ok(Some(MaintenanceReport {
            wall_millis: started.elapsed().as_secs_f64() * 1e3,
            post_ll,
        }))
    }
}

/// Installs the maintenance cascade: table mutations feed the named view
/// through selection (T1), staging (T2), and refinement (T3).
pub fn attach_triggers(
    db: &mut ModelDb,
    table: &str,
    view: &str,
    policy: SelectionPolicy,
    t_passes: u32,
    seed: u64,
) -> Result<TriggerSet, ModelError> {
    if !db.tables.contains_key(table) {
        return Err(ModelError::Config(format!("unknown table `{table}`")));
    }
    let Some(v) = db.views.get_mut(view) else {
        return Err(ModelError::Config(format!("unknown view `{view}`")));
    };
    if let Some(bound) = db.bindings.get(table) {
        return Err(ModelError::Config(format!(
            "table `{table}` is already bound to view `{bound}`"
        )));
    }
    let data = &db.tables[table];
    if data.len() > 0 {
        let pts = vector_points(data)?;
        if pts.d != v.params.dim() {
            return Err(ModelError::Config(format!(
                "table `{table}` holds {}-dimensional points but view `{view}` is {}-dimensional",
                pts.d,
                v.params.dim()
            )));
        }
    }
    v.binding = Some(Binding { policy, t_passes, base_seed: seed, statements: 0 });
    db.bindings.insert(table.to_string(), view.to_string());
    Ok(TriggerSet {
        table: table.to_string(),
        view: view.to_string(),
        t1: Trigger {
            timing: TriggerTiming::BeforeStatement,
            action: TriggerAction::SelectRetainSet,
        },
        t2: Trigger {
            timing: TriggerTiming::BeforeEachRow,
            action: TriggerAction::StageIncomingRow,
        },
        t3: Trigger {
            timing: TriggerTiming::AfterStatement,
            action: TriggerAction::RunModelUpdate,
        },
    })
}

/// Splits a relation into (matching, remaining) by id, requiring every
/// requested id to exist exactly once.
fn split_by_ids(rel: &Relation, ids: &[i64]) -> Result<(Relation, Relation), ModelError> {
    let id_idx = rel.schema().resolve(None, "id").map_err(ModelError::Data)?;
    let wanted: HashSet<i64> = ids.iter().copied().collect();
    let mut hit = HashSet::new();
    let mut deleted = Vec::new();
    let mut remaining = Vec::new();
    for row in rel.rows() {
        let id = row[id_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[id_idx])))?;
        if wanted.contains(&id) {
            hit.insert(id);
            deleted.push(row.clone());
        } else {
            remaining.push(row.clone());
        }
    }
    if let Some(missing) = wanted.iter().find(|id| !hit.contains(id)) {
        return Err(ModelError::Data(format!("cannot delete id {missing}: not present")));
    }
    let deleted = Relation::new(rel.schema().clone(), deleted).expect("rows from valid relation");
    let remaining = Relation::new(rel.schema().clone(), remaining).expect("rows from valid relation");
    Ok((deleted, remaining))
}

/// Rejects inserts whose ids already exist in the table (maintained
/// tables key their points by id).
fn reject_known_ids(current: &Relation, incoming: &Relation) -> Result<(), ModelError> {
    let cur_idx = current.schema().resolve(None, "id").map_err(ModelError::Data)?;
    let inc_idx = incoming.schema().resolve(None, "id").map_err(ModelError::Data)?;
    let existing: HashSet<i64> =
        current.rows().iter().filter_map(|r| r[cur_idx].as_int()).collect();
    for row in incoming.rows() {
        let id = row[inc_idx]
            .as_int()
            .ok_or_else(|| ModelError::Data(format!("id must be an integer, got {}", row[inc_idx])))?;
        if existing.contains(&id) {
            return Err(ModelError::Data(format!("id {id} already exists")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AttrType, Schema, Value};
    use approx::assert_relative_eq;

    fn points_1d(values: &[(i64, f64)]) -> Relation {
        let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(1))]);
        let rows = values
            .iter()
            .map(|&(id, v)| vec![Value::Int(id), Value::Vector(vec![v])])
            .collect();
        Relation::new(schema, rows).unwrap()
    }

    fn resp(rows: &[(i64, i64, f64)]) -> Relation {
        let schema = Schema::from_pairs(&[
            ("id", AttrType::Int),
            ("k", AttrType::Int),
            ("p", AttrType::Real),
        ]);
        Relation::new(
            schema,
            rows.iter()
                .map(|&(id, k, p)| vec![Value::Int(id), Value::Int(k), Value::Real(p)])
                .collect(),
        )
        .unwrap()
    }

    fn gmm_1d(components: &[(f64, f64, f64)]) -> GmmParams {
        GmmParams {
            components: components
                .iter()
                .enumerate()
                .map(|(i, &(pie, mean, var))| GmmComponent {
                    k: i as i64 + 1,
                    pie,
                    mean: vec![mean],
                    cov: Matrix::new(1, vec![var]),
                })
                .collect(),
        }
    }

    /// Two far-apart 1-d clusters whose posteriors are one-hot for all
    /// practical purposes.
    fn far_clusters() -> (Relation, GmmParams) {
        let x = points_1d(&[
            (1, -10.0),
            (2, -10.5),
            (3, -9.5),
            (4, 10.0),
            (5, 10.5),
            (6, 9.5),
        ]);
        let params = gmm_1d(&[(0.5, -10.0, 0.25), (0.5, 10.0, 0.25)]);
        (x, params)
    }

    #[test]
    fn one_hot_responsibilities_sum_cluster_points() {
        let x = points_1d(&[(1, -1.0), (2, -1.0), (3, 1.0)]);
        let params = gmm_1d(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]);
        let r = resp(&[
            (1, 1, 1.0),
            (1, 2, 0.0),
            (2, 1, 1.0),
            (2, 2, 0.0),
            (3, 1, 0.0),
            (3, 2, 1.0),
        ]);
        let s = stats_from_model(&params, &x, &r).unwrap();
        assert_eq!(s.components[0].n_k, 2.0);
        assert_eq!(s.components[0].s1, vec![-2.0]);
        assert_eq!(s.components[0].s2[(0, 0)], 2.0);
        assert_eq!(s.components[1].n_k, 1.0);
        assert_eq!(s.components[1].s1, vec![1.0]);
        s.validate().unwrap();
    }

    #[test]
    fn stats_round_trip_through_their_relation_form() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let s = stats_from_model(&params, &x, &r).unwrap();
        let rel = s.to_relation();
        assert_eq!(
            rel.schema().names(),
            vec!["k", "n_k", "s1", "s2", "n", "var_floor"]
        );
        let back = SuffStats::from_relation(&rel).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn stats_relation_with_conflicting_totals_is_rejected() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let s = stats_from_model(&params, &x, &r).unwrap();
        let rel = s.to_relation();
        let mut rows: Vec<Vec<Value>> = rel.rows().to_vec();
        rows[1][4] = Value::Real(s.n + 1.0);
        let bad = Relation::new(rel.schema().clone(), rows).unwrap();
        let err = SuffStats::from_relation(&bad).unwrap_err();
        assert!(err.to_string().contains("totals"), "got: {err}");
    }

    #[test]
    fn single_component_stats_are_raw_moments() {
        let x = points_1d(&[(1, 1.0), (2, 2.0), (3, 4.0)]);
        let params = gmm_1d(&[(1.0, 0.0, 1.0)]);
        let r = params.posterior(&x).unwrap();
        let s = stats_from_model(&params, &x, &r).unwrap();
        assert_eq!(s.n, 3.0);
        assert_eq!(s.components[0].n_k, 3.0);
        assert_eq!(s.components[0].s1, vec![7.0]);
        assert_eq!(s.components[0].s2[(0, 0)], 21.0);
    }

    #[test]
    fn stats_match_a_naive_double_loop() {
        let x = points_1d(&[(1, -2.0), (2, -0.5), (3, 0.3), (4, 1.9)]);
        let params = gmm_1d(&[(0.6, -1.0, 0.8), (0.4, 1.0, 1.2)]);
        let r = params.posterior(&x).unwrap();
        let s = stats_from_model(&params, &x, &r).unwrap();

        // Naive oracle: outer loop over components, inner over points.
        let xs = [-2.0, -0.5, 0.3, 1.9];
        for (slot, c) in s.components.iter().enumerate() {
            let mut n_k = 0.0;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for (i, &xv) in xs.iter().enumerate() {
                let p = r.rows()[i * 2 + slot][2].as_f64().unwrap();
                n_k += p;
                s1 += p * xv;
                s2 += p * xv * xv;
            }
            assert_relative_eq!(c.n_k, n_k, max_relative = 1e-12);
            assert_relative_eq!(c.s1[0], s1, max_relative = 1e-12);
            assert_relative_eq!(c.s2[(0, 0)], s2, max_relative = 1e-12);
        }
        s.validate().unwrap();
    }

    #[test]
    fn degenerate_clusters_recover_floored_parameters() {
        let x = points_1d(&[(1, -1.0), (2, 1.0)]);
        let params = gmm_1d(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]);
        let r = resp(&[(1, 1, 1.0), (1, 2, 0.0), (2, 1, 0.0), (2, 2, 1.0)]);
        let s = stats_from_model(&params, &x, &r).unwrap();
        let rec = params_from_stats(&s).unwrap();
        assert_eq!(rec.components[0].mean, vec![-1.0]);
        assert_eq!(rec.components[1].mean, vec![1.0]);
        assert_eq!(rec.components[0].pie, 0.5);
        // Zero spread is lifted to the variance floor: (1e-6·range)².
        let floor = (1e-6 * 2.0f64).powi(2);
        assert_eq!(rec.components[0].cov[(0, 0)], floor);
    }

    #[test]
    fn converged_model_round_trips_through_stats() {
        use crate::models::{train_gmm, InitStrategy, TrainConfig};
        let (x, init) = far_clusters();
        let cfg = TrainConfig {
            k: 2,
            max_iterations: 30,
            seed: 13,
            init: InitStrategy::Provided(init.to_relation()),
            epsilon: None,
        };
        let out = train_gmm(&x, &cfg).unwrap();
        let r = out.params.posterior(&x).unwrap();
        let s = stats_from_model(&out.params, &x, &r).unwrap();
        let rec = params_from_stats(&s).unwrap();
        for (a, b) in rec.components.iter().zip(&out.params.components) {
            assert_relative_eq!(a.pie, b.pie, epsilon = 1e-9);
            assert_relative_eq!(a.mean[0], b.mean[0], epsilon = 1e-9);
            assert_relative_eq!(a.cov[(0, 0)], b.cov[(0, 0)], epsilon = 1e-9);
        }
    }

    #[test]
    fn single_component_stats_recover_sample_moments() {
        let x = points_1d(&[(1, 1.0), (2, 2.0), (3, 4.0), (4, 7.0)]);
        let params = gmm_1d(&[(1.0, 0.0, 1.0)]);
        let r = params.posterior(&x).unwrap();
        let rec = params_from_stats(&stats_from_model(&params, &x, &r).unwrap()).unwrap();
        let mean = (1.0 + 2.0 + 4.0 + 7.0) / 4.0;
        let var = [1.0f64, 2.0, 4.0, 7.0].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert_relative_eq!(rec.components[0].mean[0], mean, max_relative = 1e-12);
        assert_relative_eq!(rec.components[0].cov[(0, 0)], var, max_relative = 1e-12);
        assert_eq!(rec.components[0].pie, 1.0);
    }

    #[test]
    fn empty_mass_is_reported_per_component() {
        let s = SuffStats {
            components: vec![
                ComponentStats { k: 1, n_k: 2.0, s1: vec![1.0], s2: Matrix::new(1, vec![3.0]) },
                ComponentStats { k: 2, n_k: 0.0, s1: vec![0.0], s2: Matrix::new(1, vec![0.0]) },
            ],
            n: 2.0,
            var_floor: 1e-12,
        };
        assert!(matches!(params_from_stats(&s), Err(ModelError::EmptyComponent { k: 2 })));
    }

    #[test]
    fn distance_selection_keeps_only_ambiguous_points() {
        let (_, params) = far_clusters();
        // A point at a component mean is safely inside exactly one
        // component; the midpoint is outside both radii.
        let data = points_1d(&[(1, -10.0), (2, 0.0), (3, 10.0)]);
        let policy = SelectionPolicy {
            strategy: SelectionStrategy::DistanceBased { radius: 3.0 },
            budget: 10,
        };
        let keep = select_retain_set(&data, &params, &policy).unwrap();
        assert_eq!(keep.len(), 1);
        assert_eq!(keep.rows()[0][0], Value::Int(2));

        // Identical components make every point ambiguous.
        let twin = gmm_1d(&[(0.5, 0.0, 1.0), (0.5, 0.0, 1.0)]);
        let keep = select_retain_set(&points_1d(&[(1, 0.0)]), &twin, &policy).unwrap();
        assert_eq!(keep.len(), 1);

        // Budget zero retains nothing.
        let broke = SelectionPolicy {
            strategy: SelectionStrategy::DistanceBased { radius: 3.0 },
            budget: 0,
        };
        assert_eq!(select_retain_set(&data, &params, &broke).unwrap().len(), 0);
    }

    #[test]
    fn entropy_selection_ranks_by_ambiguity() {
        let (_, params) = far_clusters();
        let data = points_1d(&[(1, -10.0), (2, 0.0), (3, 9.0)]);
        let policy = SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 1 };
        let keep = select_retain_set(&data, &params, &policy).unwrap();
        assert_eq!(keep.len(), 1);
        // The midpoint has (near-)maximal posterior entropy.
        assert_eq!(keep.rows()[0][0], Value::Int(2));
    }

    #[test]
    fn empty_delta_with_no_passes_is_bitwise_identity() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let empty = points_1d(&[]);
        let (p2, s2) = model_update(&params, &stats, &empty, &empty, 0, 99).unwrap();
        assert_eq!(p2, params);
        assert_eq!(s2, stats);
        let (p3, s3) = model_downdate(&params, &stats, &empty, &empty, 0, 99).unwrap();
        assert_eq!(p3, params);
        assert_eq!(s3, stats);
    }

    #[test]
    fn inserting_at_a_center_shifts_mass_but_not_the_mean() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let before = params_from_stats(&stats).unwrap();

        let inserted = points_1d(&[(7, -10.0), (8, -10.0), (9, -10.0)]);
        let (after, s2) =
            model_update(&before, &stats, &points_1d(&[]), &inserted, 0, 1).unwrap();
        // Line-2 hand computation: each inserted point lands on component
        // 1 with posterior mass ~1, so its mean barely moves while its
        // prior grows to (n_1 + 3)/(n + 3).
        let expect_pie = (stats.components[0].n_k + 3.0) / (stats.n + 3.0);
        assert_relative_eq!(after.components[0].mean[0], before.components[0].mean[0], epsilon = 1e-9);
        assert_relative_eq!(after.components[0].pie, expect_pie, epsilon = 1e-9);
        assert_relative_eq!(s2.n, 9.0, epsilon = 1e-12);
        s2.validate().unwrap();
    }

    #[test]
    fn delete_then_reinsert_restores_stats() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();

        let rows = points_1d(&[(2, -10.5), (5, 10.5)]);
        let empty = points_1d(&[]);
        let (mid_params, mid_stats) =
            model_downdate(&params, &stats, &rows, &empty, 0, 7).unwrap();
        let (_, back) = model_update(&mid_params, &mid_stats, &empty, &rows, 0, 7).unwrap();

        assert_relative_eq!(back.n, stats.n, epsilon = 1e-12);
        for (a, b) in back.components.iter().zip(&stats.components) {
            assert_relative_eq!(a.n_k, b.n_k, epsilon = 1e-9);
            assert_relative_eq!(a.s1[0], b.s1[0], epsilon = 1e-9);
            assert_relative_eq!(a.s2[(0, 0)], b.s2[(0, 0)], epsilon = 1e-9);
        }
    }

    #[test]
    fn deleting_a_whole_cluster_empties_its_mass_only() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();

        let doomed = points_1d(&[(4, 10.0), (5, 10.5), (6, 9.5)]);
        let before = params_from_stats(&stats).unwrap();
        let (after, s2) = model_downdate(&before, &stats, &doomed, &points_1d(&[]), 0, 3).unwrap();
        assert!(s2.components[1].n_k.abs() < 1e-6, "mass left: {}", s2.components[1].n_k);
        assert_relative_eq!(after.components[0].mean[0], before.components[0].mean[0], epsilon = 1e-9);
        assert_relative_eq!(after.components[0].cov[(0, 0)], before.components[0].cov[(0, 0)], epsilon = 1e-9);
        assert_eq!(s2.n, 3.0);
    }

    #[test]
    fn refinement_is_deterministic_and_keeps_symmetry() {
        // 2-d variant so the second moments have off-diagonal entries.
        let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(2))]);
        let rows: Vec<_> = [
            (1, [-5.0, -4.8]),
            (2, [-5.2, -5.1]),
            (3, [5.0, 5.1]),
            (4, [5.2, 4.9]),
        ]
        .iter()
        .map(|&(id, v)| vec![Value::Int(id), Value::Vector(v.to_vec())])
        .collect();
        let x = Relation::new(schema, rows).unwrap();
        let params = GmmParams {
            components: vec![
                GmmComponent {
                    k: 1,
                    pie: 0.5,
                    mean: vec![-5.0, -5.0],
                    cov: Matrix::new(2, vec![1.0, 0.0, 0.0, 1.0]),
                },
                GmmComponent {
                    k: 2,
                    pie: 0.5,
                    mean: vec![5.0, 5.0],
                    cov: Matrix::new(2, vec![1.0, 0.0, 0.0, 1.0]),
                },
            ],
        };
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let inserted = Relation::new(
            x.schema().clone(),
            vec![vec![Value::Int(9), Value::Vector(vec![4.7, 5.3])]],
        )
        .unwrap();
        let x_prime = x.concat(&inserted).unwrap();

        let run = || model_update(&params, &stats, &x_prime, &inserted, 2, 42).unwrap();
        let (pa, sa) = run();
        let (pb, sb) = run();
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
        for c in &sa.components {
            assert!(max_asymmetry(&c.s2) <= 1e-9);
        }
        sa.validate().unwrap();
    }

    #[test]
    fn trigger_cascade_maintains_the_view() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();

        let mut db = ModelDb::new();
        db.register_table("pts", x.clone());
        db.register_view("blobs", params.clone(), stats.clone()).unwrap();
        let set = attach_triggers(
            &mut db,
            "pts",
            "blobs",
            SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 2 },
            1,
            19,
        )
        .unwrap();
        assert_eq!(set.t1.timing, TriggerTiming::BeforeStatement);
        assert_eq!(set.t2.timing, TriggerTiming::BeforeEachRow);
        assert_eq!(set.t3.timing, TriggerTiming::AfterStatement);

        let report = db
            .insert_rows("pts", &points_1d(&[(7, -9.8), (8, 10.2)]))
            .unwrap()
            .expect("bound table reports maintenance");
        assert_eq!(db.table("pts").unwrap().len(), 8);
        assert_eq!(db.last_firings(), ["t1", "t2", "t2", "t3"]);
        assert!(db.staging("blobs").is_none());
        assert!(report.post_ll.is_finite());
        let view = db.view("blobs").unwrap();
        assert_relative_eq!(view.stats.n, 8.0, epsilon = 1e-12);
        view.stats.validate().unwrap();

        // Deleting the same rows fires the statement-level triggers only.
        let report = db.delete_ids("pts", &[7, 8]).unwrap().expect("report");
        assert_eq!(db.table("pts").unwrap().len(), 6);
        assert_eq!(db.last_firings(), ["t1", "t3"]);
        assert!(report.post_ll.is_finite());
        assert_relative_eq!(db.view("blobs").unwrap().stats.n, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_budget_zero_passes_insert_equals_plain_delta() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();

        let mut db = ModelDb::new();
        db.register_table("pts", x.clone());
        db.register_view("blobs", params.clone(), stats.clone()).unwrap();
        attach_triggers(
            &mut db,
            "pts",
            "blobs",
            SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 0 },
            0,
            19,
        )
        .unwrap();
        let incoming = points_1d(&[(7, -9.7), (8, 9.6)]);
        db.insert_rows("pts", &incoming).unwrap();

        let (expect_params, expect_stats) =
            model_update(&params, &stats, &incoming, &incoming, 0, 19).unwrap();
        let view = db.view("blobs").unwrap();
        assert_eq!(view.params, expect_params);
        assert_eq!(view.stats, expect_stats);
    }

    #[test]
    fn consecutive_inserts_match_one_statement_on_separated_data() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let policy = || SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 100 };

        let mut twice = ModelDb::new();
        twice.register_table("pts", x.clone());
        twice.register_view("blobs", params.clone(), stats.clone()).unwrap();
        attach_triggers(&mut twice, "pts", "blobs", policy(), 1, 19).unwrap();
        twice.insert_rows("pts", &points_1d(&[(7, -9.9), (8, -10.1)])).unwrap();
        twice.insert_rows("pts", &points_1d(&[(9, 9.9), (10, 10.1)])).unwrap();

        let mut once = ModelDb::new();
        once.register_table("pts", x.clone());
        once.register_view("blobs", params.clone(), stats.clone()).unwrap();
        attach_triggers(&mut once, "pts", "blobs", policy(), 1, 19).unwrap();
        once.insert_rows("pts", &points_1d(&[(7, -9.9), (8, -10.1), (9, 9.9), (10, 10.1)]))
            .unwrap();

        let a = &twice.view("blobs").unwrap().params;
        let b = &once.view("blobs").unwrap().params;
        for (ca, cb) in a.components.iter().zip(&b.components) {
            assert_relative_eq!(ca.pie, cb.pie, epsilon = 1e-2);
            assert_relative_eq!(ca.mean[0], cb.mean[0], epsilon = 1e-2);
            assert_relative_eq!(ca.cov[(0, 0)], cb.cov[(0, 0)], epsilon = 1e-2);
        }
    }

    #[test]
    fn attach_rejects_mismatches() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let policy = SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 1 };

        let mut db = ModelDb::new();
        db.register_table("pts", x);
        db.register_view("blobs", params, stats).unwrap();
        assert!(matches!(
            attach_triggers(&mut db, "ghost", "blobs", policy.clone(), 0, 1),
            Err(ModelError::Config(_))
        ));
        assert!(matches!(
            attach_triggers(&mut db, "pts", "ghost", policy.clone(), 0, 1),
            Err(ModelError::Config(_))
        ));
        // Dimension mismatch between table and view.
        let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(2))]);
        let wide = Relation::new(
            schema,
            vec![vec![Value::Int(1), Value::Vector(vec![0.0, 0.0])]],
        )
        .unwrap();
        db.register_table("wide", wide);
        assert!(matches!(
            attach_triggers(&mut db, "wide", "blobs", policy.clone(), 0, 1),
            Err(ModelError::Config(_))
        ));
        // Binding twice is refused.
        attach_triggers(&mut db, "pts", "blobs", policy.clone(), 0, 1).unwrap();
        assert!(matches!(
            attach_triggers(&mut db, "pts", "blobs", policy, 0, 1),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn duplicate_or_missing_ids_are_rejected() {
        let (x, params) = far_clusters();
        let r = params.posterior(&x).unwrap();
        let stats = stats_from_model(&params, &x, &r).unwrap();
        let mut db = ModelDb::new();
        db.register_table("pts", x);
        db.register_view("blobs", params, stats).unwrap();
        attach_triggers(
            &mut db,
            "pts",
            "blobs",
            SelectionPolicy { strategy: SelectionStrategy::EntropyBased, budget: 0 },
            0,
            1,
        )
        .unwrap();
        assert!(matches!(
            db.insert_rows("pts", &points_1d(&[(1, 0.0)])),
            Err(ModelError::Data(_))
        ));
        assert!(matches!(db.delete_ids("pts", &[77]), Err(ModelError::Data(_))));
    }

    #[test]
    fn unbound_tables_mutate_without_reports() {
        let mut db = ModelDb::new();
        db.register_table("raw", points_1d(&[(1, 1.0), (2, 2.0)]));
        assert!(db.insert_rows("raw", &points_1d(&[(3, 3.0)])).unwrap().is_none());
        assert_eq!(db.table("raw").unwrap().len(), 3);
        assert!(db.delete_ids("raw", &[1]).unwrap().is_none());
        assert_eq!(db.table("raw").unwrap().len(), 2);
    }
}
