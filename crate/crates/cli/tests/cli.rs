//! End-to-end tests of the `mixql` binary: every subcommand exercised
//! against a temporary workspace, with library calls as the oracle where
//! the command wraps one.

use std::path::Path;
use std::process::Output;

use mixql::maintenance::{model_update, SuffStats};
use mixql::models::{GmmParams, GMM_SCRIPT};

fn mixql_cmd(ws: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_mixql"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .expect("the binary runs")
}

/// Runs the binary expecting success; returns stdout.
fn ok(ws: &Path, args: &[&str]) -> String {
    let out = mixql_cmd(ws, args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is utf-8")
}

/// Runs the binary expecting failure; returns stderr.
fn fails(ws: &Path, args: &[&str]) -> String {
    let out = mixql_cmd(ws, args);
    assert!(
        !out.status.success(),
        "command {args:?} unexpectedly succeeded\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stderr).expect("stderr is utf-8")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("test file writes");
}

// ---------------------------------------------------------------- load

#[test]
fn load_reports_the_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    write(&csv, "id,x\n1,\"[0.5,1.0]\"\n2,\"[2.0,3.0]\"\n");
    let out = ok(dir.path(), &["load", "pts", csv.to_str().unwrap()]);
    assert_eq!(out, "table pts: 2 rows\n");
}

#[test]
fn load_of_a_headered_empty_file_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    write(&csv, "id,x\n");
    let out = ok(dir.path(), &["load", "empty", csv.to_str().unwrap()]);
    assert_eq!(out, "table empty: 0 rows\n");
}

#[test]
fn load_of_a_malformed_vector_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    write(&csv, "id,x\n1,\"[1.0]\"\n2,\"[one point zero]\"\n");
    let err = fails(dir.path(), &["load", "bad", csv.to_str().unwrap()]);
    assert!(err.contains("row 2"), "stderr should name row 2, got: {err}");
}

// ----------------------------------------------------------------- run

#[test]
fn run_computes_a_transitive_closure() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("e.csv");
    write(&csv, "f,t\n1,2\n2,3\n3,4\n");
    ok(dir.path(), &["load", "e", csv.to_str().unwrap()]);

    let script = dir.path().join("tc.sql");
    write(
        &script,
        "with tc(f, t) as (\n  (select f, t from e)\n  union all\n  (select tc.f, e.t from tc, e where tc.t = e.f))\n",
    );
    let out = ok(dir.path(), &["run", script.to_str().unwrap()]);
    assert_eq!(out, "f,t\n1,2\n2,3\n3,4\n1,3\n2,4\n1,4\n");
}

#[test]
fn run_trains_a_mixture_through_the_script_and_traces_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    ok(
        dir.path(),
        &[
            "--seed", "1", "generate", "--kind", "gaussian", "--n", "40", "--d", "1", "--k", "2",
            "--noise", "0.3", data.to_str().unwrap(),
        ],
    );
    ok(dir.path(), &["load", "x", data.to_str().unwrap()]);

    let init = dir.path().join("init.csv");
    write(&init, "k,pie,mean,cov\n1,0.5,\"[2.0]\",\"[[1.0]]\"\n2,0.5,\"[8.0]\",\"[[1.0]]\"\n");
    ok(dir.path(), &["load", "init_para", init.to_str().unwrap()]);
    let hyper = dir.path().join("hyper.csv");
    write(&hyper, "vfloor\n0.000001\n");
    ok(dir.path(), &["load", "hyper", hyper.to_str().unwrap()]);

    let script = dir.path().join("gmm.sql");
    write(&script, GMM_SCRIPT);
    let trace = dir.path().join("trace.csv");
    let out = ok(
        dir.path(),
        &["--trace", trace.to_str().unwrap(), "run", script.to_str().unwrap()],
    );

    // The settled view is a valid two-component mixture.
    let rel = mixql::io::read_csv_from(out.as_bytes()).unwrap();
    assert_eq!(rel.schema().names(), vec!["k", "pie", "mean", "cov"]);
    let params = GmmParams::from_relation(&rel).unwrap();
    params.validate().unwrap();
    assert_eq!(params.component_count(), 2);

    // The script declares maxrecursion 10, so the trace shows 10 rounds.
    let trace_rel = mixql::io::read_csv(&trace).unwrap();
    assert_eq!(trace_rel.len(), 10);
    assert_eq!(trace_rel.schema().names(), vec!["iteration", "rows", "changed", "millis"]);
}

#[test]
fn run_rejects_a_second_union_by_update_arm() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("base.csv");
    write(&csv, "k,v\n1,0\n");
    ok(dir.path(), &["load", "base", csv.to_str().unwrap()]);

    let script = dir.path().join("double.sql");
    write(
        &script,
        "with r(k, v) as (\n  (select k, v from base)\n  union by update k\n  (select k, v + 1 from r)\n  union by update k\n  (select k, v + 2 from r)\n  maxrecursion 3)\n",
    );
    let err = fails(dir.path(), &["run", script.to_str().unwrap()]);
    assert!(err.contains("at most once"), "stderr should carry the diagnostic, got: {err}");
}

// -------------------------------------------------- train/assign/eval

#[test]
fn trained_two_blob_view_assigns_with_perfect_purity() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    ok(
        dir.path(),
        &[
            "--seed", "1", "generate", "--kind", "gaussian", "--n", "80", "--d", "1", "--k", "2",
            "--noise", "0.2", data.to_str().unwrap(),
        ],
    );
    ok(dir.path(), &["load", "pts", data.to_str().unwrap()]);
    ok(
        dir.path(),
        &[
            "--seed", "1", "train", "clusters", "--model", "gmm", "--table", "pts", "--k", "2",
            "--iterations", "30",
        ],
    );

    let assigned = dir.path().join("assigned.csv");
    ok(dir.path(), &["assign", "clusters", "--table", "pts", "--out", assigned.to_str().unwrap()]);
    let out = ok(dir.path(), &["eval", assigned.to_str().unwrap(), "pts"]);
    let purity_line = out.lines().next().unwrap();
    assert_eq!(purity_line, "purity=1");
}

#[test]
fn training_is_deterministic_given_the_seed() {
    let mut views = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("blobs.csv");
        ok(
            dir.path(),
            &[
                "--seed", "4", "generate", "--kind", "gaussian", "--n", "50", "--d", "2", "--k",
                "3", "--noise", "0.5", data.to_str().unwrap(),
            ],
        );
        ok(dir.path(), &["load", "pts", data.to_str().unwrap()]);
        ok(
            dir.path(),
            &[
                "--seed", "9", "train", "m", "--model", "gmm", "--table", "pts", "--k", "3",
                "--iterations", "10",
            ],
        );
        views.push(std::fs::read(dir.path().join("views/m.csv")).unwrap());
    }
    assert_eq!(views[0], views[1]);
}

#[test]
fn inference_under_a_single_component_view_is_certain() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    write(&csv, "id,x\n1,\"[0.0]\"\n2,\"[1.0]\"\n3,\"[4.0]\"\n");
    ok(dir.path(), &["load", "pts", csv.to_str().unwrap()]);
    ok(
        dir.path(),
        &["--seed", "2", "train", "solo", "--model", "gmm", "--table", "pts", "--k", "1"],
    );
    let out = ok(dir.path(), &["infer", "solo", "--table", "pts"]);
    assert_eq!(out, "id,k,p\n1,1,1.0\n2,1,1.0\n3,1,1.0\n");
}

#[test]
fn evaluating_a_perfect_assignment_scores_both_metrics_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let assigned = dir.path().join("assigned.csv");
    let truth = dir.path().join("truth.csv");
    write(&assigned, "id,k\n1,1\n2,1\n3,2\n4,2\n5,3\n6,3\n");
    write(&truth, "id,label\n1,7\n2,7\n3,8\n4,8\n5,9\n6,9\n");
    let out = ok(dir.path(), &["eval", assigned.to_str().unwrap(), truth.to_str().unwrap()]);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "purity=1");
    let nmi: f64 = lines.next().unwrap().strip_prefix("nmi=").unwrap().parse().unwrap();
    assert!((nmi - 1.0).abs() < 1e-12, "nmi={nmi}");
}

// ------------------------------------------------------------ generate

#[test]
fn generated_components_are_evenly_drawn() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("blobs.csv");
    let out = ok(
        dir.path(),
        &[
            "--seed", "3", "generate", "--kind", "gaussian", "--n", "100", "--d", "2", "--k",
            "10", out_path.to_str().unwrap(),
        ],
    );
    assert!(out.contains("wrote 100 rows"));
    let rel = mixql::io::read_csv(&out_path).unwrap();
    let label_idx = rel.schema().resolve(None, "label").unwrap();
    let mut counts = std::collections::HashMap::new();
    for row in rel.rows() {
        *counts.entry(row[label_idx].as_int().unwrap()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 10);
    assert!(counts.values().all(|&c| c == 10), "counts: {counts:?}");
}

#[test]
fn generation_is_byte_identical_for_a_repeated_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let args = |p: &Path, seed: &'static str| {
        vec![
            "--seed".to_string(), seed.to_string(), "generate".into(), "--kind".into(),
            "linear".into(), "--n".into(), "30".into(), "--d".into(), "3".into(), "--k".into(),
            "2".into(), p.to_str().unwrap().into(),
        ]
    };
    let run = |argv: Vec<String>| {
        let argv: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        ok(dir.path(), &argv);
    };
    run(args(&a, "11"));
    run(args(&b, "11"));
    run(args(&c, "12"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn linear_generation_has_the_regression_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("lines.csv");
    ok(
        dir.path(),
        &[
            "--seed", "5", "generate", "--kind", "linear", "--n", "10", "--d", "2", "--k", "2",
            out_path.to_str().unwrap(),
        ],
    );
    let rel = mixql::io::read_csv(&out_path).unwrap();
    assert_eq!(rel.schema().names(), vec!["id", "x", "y", "label"]);
}

#[test]
fn normalized_generation_zero_centers_the_features() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("z.csv");
    ok(
        dir.path(),
        &[
            "--seed", "6", "generate", "--kind", "gaussian", "--n", "50", "--d", "3", "--k", "4",
            "--normalize", out_path.to_str().unwrap(),
        ],
    );
    let rel = mixql::io::read_csv(&out_path).unwrap();
    let x_idx = rel.schema().resolve(None, "x").unwrap();
    for dim in 0..3 {
        let mean: f64 = rel
            .rows()
            .iter()
            .map(|r| r[x_idx].as_vector().unwrap()[dim])
            .sum::<f64>()
            / rel.len() as f64;
        assert!(mean.abs() < 1e-9, "dim {dim} mean {mean}");
    }
}

// ------------------------------------------- attach / insert / delete

/// Builds a bound workspace: two-blob data in `pts`, a K=2 view `c`
/// bound with the entropy strategy, budget 0, no refinement passes.
fn bound_workspace(dir: &Path) {
    let data = dir.join("blobs.csv");
    ok(
        dir,
        &[
            "--seed", "1", "generate", "--kind", "gaussian", "--n", "60", "--d", "1", "--k", "2",
            "--noise", "0.3", data.to_str().unwrap(),
        ],
    );
    ok(dir, &["load", "pts", data.to_str().unwrap()]);
    ok(
        dir,
        &[
            "--seed", "1", "train", "c", "--model", "gmm", "--table", "pts", "--k", "2",
            "--iterations", "20",
        ],
    );
    ok(
        dir,
        &[
            "--seed", "5", "attach", "--table", "pts", "--view", "c", "--strategy", "entropy",
            "--budget", "0", "--passes", "0",
        ],
    );
}

#[test]
fn insert_with_zero_budget_and_no_passes_is_the_plain_delta() {
    let dir = tempfile::tempdir().unwrap();
    bound_workspace(dir.path());
    let params0 =
        GmmParams::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.csv")).unwrap())
            .unwrap();
    let stats0 =
        SuffStats::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.stats.csv")).unwrap())
            .unwrap();

    let incoming = dir.path().join("incoming.csv");
    write(&incoming, "id,x,label\n1000,\"[0.8]\",0\n1001,\"[4.0]\",1\n");
    let out = ok(dir.path(), &["insert", "pts", incoming.to_str().unwrap()]);
    assert!(out.contains("inserted 2 rows into pts (62 rows now)"), "got: {out}");
    assert!(out.contains("maintenance:"), "got: {out}");
    assert!(out.contains("log-likelihood"), "got: {out}");

    // Oracle: with budget 0 the staged relation is exactly the incoming
    // rows, and with no passes the update is the pure statistics delta.
    let x_prime = mixql::io::read_csv(&incoming).unwrap();
    let (expected_params, expected_stats) =
        model_update(&params0, &stats0, &x_prime, &x_prime, 0, 0).unwrap();

    let params1 =
        GmmParams::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.csv")).unwrap())
            .unwrap();
    let stats1 =
        SuffStats::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.stats.csv")).unwrap())
            .unwrap();
    assert_eq!(params1, expected_params);
    assert_eq!(stats1, expected_stats);
}

#[test]
fn deleting_the_inserted_rows_restores_the_statistics() {
    let dir = tempfile::tempdir().unwrap();
    bound_workspace(dir.path());
    let stats0 =
        SuffStats::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.stats.csv")).unwrap())
            .unwrap();

    // Points well inside each fitted component: their responsibilities
    // saturate, so the contributions subtracted at delete time (under the
    // post-insert parameters) bitwise-match the ones added at insert time.
    let incoming = dir.path().join("incoming.csv");
    write(&incoming, "id,x,label\n1000,\"[0.8]\",0\n1001,\"[4.0]\",1\n");
    ok(dir.path(), &["insert", "pts", incoming.to_str().unwrap()]);
    let out = ok(dir.path(), &["delete", "pts", "--ids", "1000,1001"]);
    assert!(out.contains("deleted 2 rows from pts (60 rows now)"), "got: {out}");

    let stats1 =
        SuffStats::from_relation(&mixql::io::read_csv(&dir.path().join("views/c.stats.csv")).unwrap())
            .unwrap();
    assert_eq!(stats1.n, stats0.n);
    for (a, b) in stats1.components.iter().zip(&stats0.components) {
        assert!((a.n_k - b.n_k).abs() < 1e-9, "n_{}: {} vs {}", a.k, a.n_k, b.n_k);
        for (x, y) in a.s1.iter().zip(&b.s1) {
            assert!((x - y).abs() < 1e-9, "s1_{}: {x} vs {y}", a.k);
        }
        for (x, y) in a.s2.data().iter().zip(b.s2.data()) {
            assert!((x - y).abs() < 1e-9, "s2_{}: {x} vs {y}", a.k);
        }
    }

    // Two statements ran, and the manifest counted them.
    let manifest = std::fs::read_to_string(dir.path().join("workspace.toml")).unwrap();
    assert!(manifest.contains("statements = 2"), "manifest: {manifest}");
}

#[test]
fn inserting_into_an_unbound_table_leaves_views_alone() {
    let dir = tempfile::tempdir().unwrap();
    bound_workspace(dir.path());
    let other = dir.path().join("other.csv");
    write(&other, "id,x\n1,\"[0.0]\"\n");
    ok(dir.path(), &["load", "other", other.to_str().unwrap()]);

    let view_before = std::fs::read(dir.path().join("views/c.csv")).unwrap();
    let more = dir.path().join("more.csv");
    write(&more, "id,x\n2,\"[1.0]\"\n3,\"[2.0]\"\n");
    let out = ok(dir.path(), &["insert", "other", more.to_str().unwrap()]);
    assert!(out.contains("no binding on other"), "got: {out}");
    assert_eq!(std::fs::read(dir.path().join("views/c.csv")).unwrap(), view_before);

    let rel = mixql::io::read_csv(&dir.path().join("data/other.csv")).unwrap();
    assert_eq!(rel.len(), 3);
}

#[test]
fn attaching_to_a_bound_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    bound_workspace(dir.path());
    let err = fails(
        dir.path(),
        &["attach", "--table", "pts", "--view", "c", "--strategy", "entropy"],
    );
    assert!(err.contains("already bound"), "got: {err}");
}

#[test]
fn distance_strategy_requires_a_radius() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    ok(
        dir.path(),
        &[
            "--seed", "1", "generate", "--kind", "gaussian", "--n", "30", "--d", "1", "--k", "2",
            data.to_str().unwrap(),
        ],
    );
    ok(dir.path(), &["load", "pts", data.to_str().unwrap()]);
    ok(
        dir.path(),
        &["--seed", "1", "train", "c", "--model", "gmm", "--table", "pts", "--k", "2"],
    );
    let err = fails(
        dir.path(),
        &["attach", "--table", "pts", "--view", "c", "--strategy", "distance"],
    );
    assert!(err.contains("--radius"), "got: {err}");
}
