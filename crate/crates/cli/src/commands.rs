//! The subcommand implementations: thin wrappers that move relations
//! between workspace CSV files and the engine's library calls. Every
//! command is deterministic given its seed and inputs, and persists any
//! state it changes back to the workspace before returning.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mixql::maintenance::{SelectionPolicy, SelectionStrategy, SuffStats};
use mixql::models::{
    train_gmm, train_mlr, train_moe, GmmParams, InitStrategy, MlrParams, MoeParams, TrainConfig,
    GMM_SCRIPT, MLR_SCRIPT, MOE_SCRIPT,
};
use mixql::relation::Relation;
use mixql::types::Value;
use mixql::{attach_triggers, stats_from_model, Catalog, ModelDb};

use crate::workspace::{BindingEntry, ViewEntry, Workspace};

/// Registers a CSV file as a table, copying it into `data/` in canonical
/// form so the workspace stays self-contained. Returns the row count.
pub fn cmd_load(ws: &mut Workspace, table: &str, csv: &Path) -> Result<usize> {
    check_name(table)?;
    if ws.manifest.views.contains_key(table) {
        bail!("`{table}` already names a view");
    }
    let rel = mixql::io::read_csv(csv)
        .with_context(|| format!("reading {}", csv.display()))?;
    let rel_path = PathBuf::from("data").join(format!("{table}.csv"));
    ws.write_relation(&rel_path, &rel)?;
    ws.manifest
        .tables
        .insert(table.to_string(), rel_path.to_string_lossy().into_owned());
    ws.save()?;
    println!("table {table}: {} rows", rel.len());
    Ok(rel.len())
}

/// Runs a dialect script through parse → validate → lower → evaluate over
/// the registered tables, printing the settled relation. `--trace` writes
/// the per-iteration evaluation trace; `--out` writes the result.
pub fn cmd_run(
    ws: &Workspace,
    script: &Path,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(script)
        .with_context(|| format!("reading {}", script.display()))?;
    let base: Vec<String> = ws.manifest.tables.keys().cloned().collect();
    let ast = mixql::sql::parse(&text).map_err(|e| anyhow!("{e}"))?;
    let graph = mixql::sql::validate(&ast, &base).map_err(|e| anyhow!("{e}"))?;
    let plan = mixql::sql::lower(&ast, &graph).map_err(|e| anyhow!("{e}"))?;

    let mut db = Catalog::new();
    for name in &base {
        db.insert(name, ws.load_table(name)?);
    }
    let (result, eval_trace) = mixql::evaluate(&plan, &db).map_err(|e| anyhow!("{e}"))?;

    if let Some(path) = trace {
        mixql::io::write_csv(&eval_trace.to_relation(), path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = out {
        mixql::io::write_csv(&result, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_relation(&result)?;
    Ok(())
}

/// Fits a mixture model over a registered table and persists it as a
/// model view (`views/<view>.csv`) plus the dialect script that ran.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    ws: &mut Workspace,
    view: &str,
    model: &str,
    table: &str,
    k: usize,
    iterations: u32,
    epsilon: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    seed: u64,
) -> Result<()> {
    check_name(view)?;
    if ws.manifest.tables.contains_key(view) {
        bail!("`{view}` already names a table");
    }
    let data = ws.load_table(table)?;
    let (lo, hi) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        (None, None) => bounding_box(&data)?,
        _ => bail!("--lo and --hi must be given together"),
    };
    let mut cfg = TrainConfig::new(k, iterations, seed);
    cfg.init = InitStrategy::RandomUniform { lo, hi };
    cfg.epsilon = epsilon;

    let (params_rel, trace, iterations_run, warnings, script_text, ll) = match model {
        "gmm" => {
            let out = train_gmm(&data, &cfg)?;
            let ll = *out.trace.last().expect("trace has the initial entry");
            (out.params.to_relation(), out.trace, out.iterations, out.warnings, GMM_SCRIPT, ll)
        }
        "mlr" => {
            let out = train_mlr(&data, &cfg)?;
            let ll = *out.trace.last().expect("trace has the initial entry");
            (out.params.to_relation(), out.trace, out.iterations, out.warnings, MLR_SCRIPT, ll)
        }
        "moe" => {
            let out = train_moe(&data, &cfg)?;
            let ll = *out.trace.last().expect("trace has the initial entry");
            (out.params.to_relation(), out.trace, out.iterations, out.warnings, MOE_SCRIPT, ll)
        }
        other => bail!("unknown model `{other}`; expected gmm, mlr or moe"),
    };
    let _ = trace;

    let script_rel = PathBuf::from("scripts").join(format!("{model}.sql"));
    let script_abs = ws.root.join(&script_rel);
    if let Some(dir) = script_abs.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&script_abs, script_text)
        .with_context(|| format!("writing {}", script_abs.display()))?;

    let view_rel = PathBuf::from("views").join(format!("{view}.csv"));
    ws.write_relation(&view_rel, &params_rel)?;
    ws.manifest.views.insert(
        view.to_string(),
        ViewEntry {
            model: model.to_string(),
            table: table.to_string(),
            script: script_rel.to_string_lossy().into_owned(),
            k,
            iterations,
            seed,
            epsilon,
            lo: Some(lo),
            hi: Some(hi),
        },
    );

    // A retrained view invalidates any statistics cached for its binding.
    let bound: Vec<String> = ws
        .manifest
        .bindings
        .iter()
        .filter(|(_, b)| b.view == view && b.precompute_stats)
        .map(|(t, _)| t.clone())
        .collect();
    for bound_table in bound {
        let params = GmmParams::from_relation(&params_rel)?;
        let base = ws.load_table(&bound_table)?;
        let r = params.posterior(&base)?;
        let stats = stats_from_model(&params, &base, &r)?;
        ws.write_relation(
            &PathBuf::from("views").join(format!("{view}.stats.csv")),
            &stats.to_relation(),
        )?;
    }
    ws.save()?;

    for w in &warnings {
        println!("warning: {w}");
    }
    println!(
        "trained {model} view {view} on {table}: k={k}, {iterations_run} iterations, log-likelihood {ll}"
    );
    Ok(())
}

/// Posterior responsibilities `(id, k, p)` of a table under a view.
pub fn cmd_infer(ws: &Workspace, view: &str, table: &str, out: Option<&Path>) -> Result<()> {
    let data = ws.load_table(table)?;
    let resp = posterior_for(ws, view, &data)?;
    emit(&resp, out)
}

/// Hard cluster assignment `(id, k)` — argmax responsibility.
pub fn cmd_assign(ws: &Workspace, view: &str, table: &str, out: Option<&Path>) -> Result<()> {
    let data = ws.load_table(table)?;
    let resp = posterior_for(ws, view, &data)?;
    let assigned = mixql::cluster_assign(&resp)?;
    emit(&assigned, out)
}

/// Purity and normalized mutual information of an assignment relation
/// against a labeled truth relation. Either argument may be a registered
/// table name or a CSV path.
pub fn cmd_eval(ws: &Workspace, assignments: &str, truth: &str) -> Result<()> {
    let clu = resolve_relation(ws, assignments)?;
    let labels = resolve_relation(ws, truth)?;
    let (purity, nmi) = mixql::evaluate_clustering(&clu, &labels)?;
    println!("purity={purity}");
    println!("nmi={nmi}");
    Ok(())
}

/// Writes a seeded synthetic dataset with a hidden `label` column.
#[allow(clippy::too_many_arguments)]
pub fn cmd_generate(
    kind: &str,
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    noise: f64,
    normalize: bool,
    out: &Path,
) -> Result<usize> {
    if n < 1 || d < 1 {
        bail!("need n >= 1 and d >= 1, got n={n}, d={d}");
    }
    if !(lo < hi) {
        bail!("need lo < hi, got [{lo}, {hi}]");
    }
    let mut rel = match kind {
        "gaussian" => mixql::synth::gaussian_blobs(n, d, k, seed, lo, hi, noise),
        "linear" => mixql::synth::linear_mixture(
            n,
            d,
            k,
            seed,
            lo,
            hi,
            noise,
            mixql::synth::Assignment::ByFirstFeature,
        ),
        other => bail!("unknown generator `{other}`; expected gaussian or linear"),
    };
    if normalize {
        rel = normalize_features(&rel)?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    mixql::io::write_csv(&rel, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} rows to {}", rel.len(), out.display());
    Ok(rel.len())
}

/// Binds a trained gmm view to its table so inserts and deletes maintain
/// it, and precomputes the sufficient statistics beside the view.
#[allow(clippy::too_many_arguments)]
pub fn cmd_attach(
    ws: &mut Workspace,
    table: &str,
    view: &str,
    strategy: &str,
    radius: Option<f64>,
    budget: usize,
    passes: u32,
    seed: u64,
    precompute: bool,
) -> Result<()> {
    let entry = ws.view_entry(view)?;
    if entry.model != "gmm" {
        bail!("view `{view}` is {}; only gmm views are maintainable", entry.model);
    }
    if !ws.manifest.tables.contains_key(table) {
        bail!("no table named `{table}` is registered");
    }
    if let Some(existing) = ws.manifest.bindings.get(table) {
        bail!("table `{table}` is already bound to view `{}`", existing.view);
    }
    // Reject bad policies now rather than at the first insert.
    let _ = parse_policy(strategy, radius, budget)?;

    let params = GmmParams::from_relation(&ws.load_view(view)?)?;
    let data = ws.load_table(table)?;
    if precompute {
        let r = params.posterior(&data)?;
        let stats = stats_from_model(&params, &data, &r)?;
        ws.write_relation(
            &PathBuf::from("views").join(format!("{view}.stats.csv")),
            &stats.to_relation(),
        )?;
    }
    ws.manifest.bindings.insert(
        table.to_string(),
        BindingEntry {
            view: view.to_string(),
            strategy: strategy.to_string(),
            radius,
            budget,
            passes,
            seed,
            statements: 0,
            precompute_stats: precompute,
        },
    );
    ws.save()?;
    println!("attached view {view} to table {table}");
    Ok(())
}

/// Inserts rows from a CSV. A bound table fires the maintenance cascade
/// and reports its cost; an unbound one just grows.
pub fn cmd_insert(ws: &mut Workspace, table: &str, csv: &Path) -> Result<()> {
    let incoming = mixql::io::read_csv(csv)
        .with_context(|| format!("reading {}", csv.display()))?;
    maintain(ws, table, Statement::Insert(incoming))
}

/// Deletes rows by id. A bound table fires the maintenance cascade and
/// reports its cost; an unbound one just shrinks.
pub fn cmd_delete(ws: &mut Workspace, table: &str, ids: &[i64]) -> Result<()> {
    if ids.is_empty() {
        bail!("no ids given");
    }
    maintain(ws, table, Statement::Delete(ids.to_vec()))
}

enum Statement {
    Insert(Relation),
    Delete(Vec<i64>),
}

/// Runs one insert or delete statement through a [`ModelDb`] hydrated
/// from the workspace, then persists every piece of state it changed.
fn maintain(ws: &mut Workspace, table: &str, stmt: Statement) -> Result<()> {
    let current = ws.load_table(table)?;
    let table_rel_path = PathBuf::from(
        ws.manifest
            .tables
            .get(table)
            .with_context(|| format!("no table named `{table}` is registered"))?
            .clone(),
    );

    let mut db = ModelDb::new();
    db.register_table(table, current);

    let binding = ws.manifest.bindings.get(table).cloned();
    if let Some(b) = &binding {
        let params = GmmParams::from_relation(&ws.load_view(&b.view)?)?;
        let stats = if b.precompute_stats {
            let path = ws.stats_path(&b.view);
            let rel = mixql::io::read_csv(&path)
                .with_context(|| format!("reading statistics from {}", path.display()))?;
            SuffStats::from_relation(&rel)?
        } else {
            let base = ws.load_table(table)?;
            let r = params.posterior(&base)?;
            stats_from_model(&params, &base, &r)?
        };
        db.register_view(&b.view, params, stats)?;
        let policy = parse_policy(&b.strategy, b.radius, b.budget)?;
        attach_triggers(&mut db, table, &b.view, policy, b.passes, b.seed + b.statements)?;
    }

    let report = match &stmt {
        Statement::Insert(rows) => db.insert_rows(table, rows)?,
        Statement::Delete(ids) => db.delete_ids(table, ids)?,
    };

    let updated = db.table(table).expect("table stays registered");
    ws.write_relation(&table_rel_path, updated)?;
    let verb = match &stmt {
        Statement::Insert(rows) => format!("inserted {} rows into", rows.len()),
        Statement::Delete(ids) => format!("deleted {} rows from", ids.len()),
    };
    println!("{verb} {table} ({} rows now)", updated.len());

    match (report, binding) {
        (Some(report), Some(b)) => {
            let view = db.view(&b.view).expect("view stays registered");
            ws.write_relation(
                &PathBuf::from("views").join(format!("{}.csv", b.view)),
                &view.params.to_relation(),
            )?;
            if b.precompute_stats {
                ws.write_relation(
                    &PathBuf::from("views").join(format!("{}.stats.csv", b.view)),
                    &view.stats.to_relation(),
                )?;
            }
            ws.manifest
                .bindings
                .get_mut(table)
                .expect("binding still registered")
                .statements += 1;
            println!(
                "maintenance: {:.3} ms, log-likelihood {}",
                report.wall_millis, report.post_ll
            );
        }
        (None, _) => println!("no binding on {table}; views untouched"),
        (Some(_), None) => unreachable!("a report implies a binding"),
    }
    ws.save()?;
    Ok(())
}

fn parse_policy(strategy: &str, radius: Option<f64>, budget: usize) -> Result<SelectionPolicy> {
    let strategy = match strategy {
        "entropy" => {
            if radius.is_some() {
                bail!("--radius only applies to the distance strategy");
            }
            SelectionStrategy::EntropyBased
        }
        "distance" => {
            let radius = radius.context("the distance strategy needs --radius")?;
            if !(radius > 0.0) {
                bail!("--radius must be positive, got {radius}");
            }
            SelectionStrategy::DistanceBased { radius }
        }
        other => bail!("unknown strategy `{other}`; expected entropy or distance"),
    };
    Ok(SelectionPolicy { strategy, budget })
}

/// Loads a view's parameters and evaluates posterior responsibilities,
/// dispatching on the registered model family.
fn posterior_for(ws: &Workspace, view: &str, data: &Relation) -> Result<Relation> {
    let entry = ws.view_entry(view)?;
    let rel = ws.load_view(view)?;
    let resp = match entry.model.as_str() {
        "gmm" => GmmParams::from_relation(&rel)?.posterior(data)?,
        "mlr" => MlrParams::from_relation(&rel)?.posterior(data)?,
        "moe" => MoeParams::from_relation(&rel)?.posterior(data)?,
        other => bail!("view `{view}` has unknown model `{other}`"),
    };
    Ok(resp)
}

/// A registered table name, or failing that, a CSV path.
fn resolve_relation(ws: &Workspace, spec: &str) -> Result<Relation> {
    if ws.manifest.tables.contains_key(spec) {
        return ws.load_table(spec);
    }
    let path = Path::new(spec);
    if path.exists() {
        return mixql::io::read_csv(path)
            .with_context(|| format!("reading {}", path.display()));
    }
    bail!("`{spec}` is neither a registered table nor an existing file");
}

/// Smallest and largest coordinate across every numeric cell of the `x`
/// attribute — the default range random initialization draws from.
fn bounding_box(rel: &Relation) -> Result<(f64, f64)> {
    let idx = rel
        .schema()
        .resolve(None, "x")
        .map_err(|e| anyhow!("cannot infer init bounds: {e}"))?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in rel.rows() {
        match &row[idx] {
            Value::Vector(v) => {
                for &c in v {
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
            other => {
                let c = other
                    .as_f64()
                    .with_context(|| format!("attribute x holds non-numeric {other}"))?;
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
    }
    if !(lo < hi) {
        // Degenerate data (empty, or a single repeated coordinate): widen
        // so uniform draws remain well defined.
        let mid = if lo.is_finite() { lo } else { 0.0 };
        return Ok((mid - 0.5, mid + 0.5));
    }
    Ok((lo, hi))
}

/// Replaces the `x` attribute with its z-scored form: each coordinate
/// centered on its column mean and divided by its standard deviation
/// (constant coordinates map to zero).
fn normalize_features(rel: &Relation) -> Result<Relation> {
    let idx = rel
        .schema()
        .resolve(None, "x")
        .map_err(|e| anyhow!("cannot normalize: {e}"))?;
    let vectors: Vec<Vec<f64>> = rel
        .rows()
        .iter()
        .map(|row| match &row[idx] {
            Value::Vector(v) => Ok(v.clone()),
            other => other
                .as_f64()
                .map(|c| vec![c])
                .with_context(|| format!("attribute x holds non-numeric {other}")),
        })
        .collect::<Result<_>>()?;
    if vectors.is_empty() {
        return Ok(rel.clone());
    }
    let d = vectors[0].len();
    let n = vectors.len() as f64;
    let mut means = vec![0.0; d];
    for v in &vectors {
        for (m, &c) in means.iter_mut().zip(v) {
            *m += c;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut sds = vec![0.0; d];
    for v in &vectors {
        for ((s, &m), &c) in sds.iter_mut().zip(&means).zip(v) {
            *s += (c - m) * (c - m);
        }
    }
    for s in &mut sds {
        *s = (*s / n).sqrt();
    }

    let rows = rel
        .rows()
        .iter()
        .zip(&vectors)
        .map(|(row, v)| {
            let z: Vec<f64> = v
                .iter()
                .zip(&means)
                .zip(&sds)
                .map(|((&c, &m), &s)| if s > 0.0 { (c - m) / s } else { 0.0 })
                .collect();
            let mut out = row.clone();
            out[idx] = Value::Vector(z);
            out
        })
        .collect();
    Relation::new(rel.schema().clone(), rows).map_err(|e| anyhow!("{e}"))
}

fn emit(rel: &Relation, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            mixql::io::write_csv(rel, path)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} rows to {}", rel.len(), path.display());
        }
        None => print_relation(rel)?,
    }
    Ok(())
}

fn print_relation(rel: &Relation) -> Result<()> {
    let stdout = std::io::stdout();
    mixql::io::write_csv_to(rel, stdout.lock()).context("writing to stdout")?;
    Ok(())
}

/// Table and view names share the dialect's identifier rules so scripts
/// can reference anything the workspace registers.
fn check_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let head_ok = chars.next().is_some_and(|c| c.is_ascii_lowercase() || c == '_');
    if !head_ok || !name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
        bail!("`{name}` is not a valid name (lowercase letters, digits and _, not starting with a digit)");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixql::types::{AttrType, Schema};

    fn vec_rel(points: &[(i64, &[f64])]) -> Relation {
        let d = points[0].1.len();
        let schema = Schema::from_pairs(&[("id", AttrType::Int), ("x", AttrType::Vector(d))]);
        let rows = points
            .iter()
            .map(|&(id, v)| vec![Value::Int(id), Value::Vector(v.to_vec())])
            .collect();
        Relation::new(schema, rows).unwrap()
    }

    #[test]
    fn bounding_box_spans_all_coordinates() {
        let rel = vec_rel(&[(1, &[-3.0, 2.0]), (2, &[0.5, 7.0])]);
        assert_eq!(bounding_box(&rel).unwrap(), (-3.0, 7.0));
    }

    #[test]
    fn bounding_box_widens_a_degenerate_range() {
        let rel = vec_rel(&[(1, &[2.0]), (2, &[2.0])]);
        assert_eq!(bounding_box(&rel).unwrap(), (1.5, 2.5));
    }

    #[test]
    fn normalized_features_have_zero_mean_unit_variance() {
        let rel = vec_rel(&[(1, &[1.0, 5.0]), (2, &[3.0, 5.0]), (3, &[5.0, 5.0])]);
        let z = normalize_features(&rel).unwrap();
        let xs: Vec<&[f64]> = z.rows().iter().map(|r| r[1].as_vector().unwrap()).collect();
        let mean0: f64 = xs.iter().map(|v| v[0]).sum::<f64>() / 3.0;
        let var0: f64 = xs.iter().map(|v| v[0] * v[0]).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-12);
        assert!((var0 - 1.0).abs() < 1e-12);
        // The constant coordinate z-scores to zero rather than dividing by zero.
        assert!(xs.iter().all(|v| v[1] == 0.0));
    }

    #[test]
    fn names_must_be_identifiers() {
        assert!(check_name("points_2d").is_ok());
        assert!(check_name("2points").is_err());
        assert!(check_name("Points").is_err());
        assert!(check_name("").is_err());
    }

    #[test]
    fn policy_parsing_enforces_strategy_arguments() {
        assert!(parse_policy("entropy", None, 5).is_ok());
        assert!(parse_policy("entropy", Some(1.0), 5).is_err());
        assert!(parse_policy("distance", Some(2.0), 5).is_ok());
        assert!(parse_policy("distance", None, 5).is_err());
        assert!(parse_policy("density", None, 5).is_err());
    }
}
