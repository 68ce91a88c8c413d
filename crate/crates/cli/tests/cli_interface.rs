//! End-to-end tests of the `gridnash` binary: exit codes, artifact
//! determinism, report formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn gridnash(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridnash"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn solve(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    gridnash(&args)
}

#[test]
fn solve_isolated_market() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(&fixture("isolated.json"), &out, &[]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    let artifact = gridnash_cli::artifact::load_artifact(&out).unwrap();
    assert!(artifact.converged);
    assert!((artifact.prices[0] - 72.0).abs() < 1e-6);
    assert!((artifact.production[0] - 1200.0).abs() < 1e-4);
}

#[test]
fn solve_two_market_prices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(&fixture("two-market.json"), &out, &[]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    let artifact = gridnash_cli::artifact::load_artifact(&out).unwrap();
    assert!((artifact.prices[0] - 84.0).abs() < 1e-5);
    assert!((artifact.prices[1] - 100.0).abs() < 1e-5);
    assert!((artifact.flows[0] - 500.0).abs() < 1e-5);
    let cuts = artifact.cuts.as_ref().expect("cut summary present");
    assert!(cuts.passed);
    assert_eq!(cuts.groups.len(), 2);
}

#[test]
fn solve_missing_config_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(Path::new("missing.json"), &out, &[]);
    assert_eq!(exit_code(&output), 1);
    assert!(!out.exists());
}

#[test]
fn solve_invalid_beta_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        r#"{
          "schema_version": 1,
          "markets": [{"id": 1, "price": {"alpha": 120.0, "beta": 0.0}}],
          "producers": [{"id": 1, "market": 1, "cost": {"theta": 0.01}}]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(&config, &out, &[]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("markets[0].price.beta"), "stderr: {stderr}");
}

#[test]
fn non_convergence_exits_2_and_writes_last_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(
        &fixture("two-market.json"),
        &out,
        &["--max-iters", "2", "--tol", "1e-14"],
    );
    assert_eq!(exit_code(&output), 2, "{output:?}");

    let artifact = gridnash_cli::artifact::load_artifact(&out).unwrap();
    assert!(!artifact.converged);
    assert!(artifact.residual > 1e-14);
    assert_eq!(artifact.production.len(), 1);
}

#[test]
fn artifacts_are_deterministic_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    assert_eq!(
        exit_code(&solve(
            &fixture("two-market.json"),
            &out_a,
            &["--seed", "5"]
        )),
        0
    );
    assert_eq!(
        exit_code(&solve(
            &fixture("two-market.json"),
            &out_b,
            &["--seed", "5"]
        )),
        0
    );

    let mut a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    let mut b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_b).unwrap()).unwrap();
    a["wall_time_ms"] = 0.0.into();
    b["wall_time_ms"] = 0.0.into();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap(),
        "same config and seed must produce identical artifacts"
    );
}

#[test]
fn analyze_writes_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    assert_eq!(exit_code(&solve(&fixture("two-market.json"), &out, &[])), 0);

    let output = gridnash(&["analyze", "--artifact", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    // Price-group CSV parses under RFC 4180 and has the documented columns.
    let groups_path = dir.path().join("eq.price_groups.csv");
    let mut reader = csv::Reader::from_path(&groups_path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        &csv::StringRecord::from(vec!["group_price_eur_mwh", "market_ids"])
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let p0: f64 = rows[0][0].parse().unwrap();
    assert!((p0 - 100.0).abs() < 1e-5);
    assert_eq!(&rows[0][1], "2");

    let flows_path = dir.path().join("eq.line_flows.csv");
    let mut reader = csv::Reader::from_path(&flows_path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        &csv::StringRecord::from(vec![
            "line_id",
            "from",
            "to",
            "flow_mw",
            "capacity_mw",
            "utilization",
            "saturated"
        ])
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][1], "1");
    assert_eq!(&rows[0][2], "2");
    let utilization: f64 = rows[0][5].parse().unwrap();
    assert!((utilization - 1.0).abs() < 1e-9);
    assert_eq!(&rows[0][6], "true");

    let certificates = std::fs::read_to_string(dir.path().join("eq.certificates.txt")).unwrap();
    assert!(certificates.contains("result: PASS"), "{certificates}");
}

#[test]
fn analyze_unconstrained_instance_is_one_group_no_saturation() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("wide.json");
    let text = std::fs::read_to_string(fixture("two-market.json"))
        .unwrap()
        .replace("500.0", "1000.0");
    std::fs::write(&config, text).unwrap();

    let out = dir.path().join("eq.json");
    assert_eq!(exit_code(&solve(&config, &out, &[])), 0);
    let output = gridnash(&["analyze", "--artifact", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    let mut reader = csv::Reader::from_path(dir.path().join("eq.price_groups.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1, "equal prices must form one group");
    assert_eq!(&rows[0][1], "1,2");

    let mut reader = csv::Reader::from_path(dir.path().join("eq.line_flows.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let utilization: f64 = rows[0][5].parse().unwrap();
    assert!((utilization - 0.75).abs() < 1e-6);
    assert_eq!(&rows[0][6], "false");
}

#[test]
fn export_graph_group_count_matches_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    assert_eq!(
        exit_code(&solve(&fixture("italy-illustrative.json"), &out, &[])),
        0
    );
    assert_eq!(
        exit_code(&gridnash(&["analyze", "--artifact", out.to_str().unwrap()])),
        0
    );
    let mut reader = csv::Reader::from_path(dir.path().join("eq.price_groups.csv")).unwrap();
    let group_count = reader.records().count();

    let dot_path = dir.path().join("eq.dot");
    assert_eq!(
        exit_code(&gridnash(&[
            "export-graph",
            "--artifact",
            out.to_str().unwrap(),
            "--out",
            dot_path.to_str().unwrap(),
        ])),
        0
    );
    let dot = std::fs::read_to_string(&dot_path).unwrap();
    let nodes = dot.lines().filter(|l| l.contains("fillcolor")).count();
    assert_eq!(nodes, 22);
    let mut colors: Vec<&str> = dot
        .lines()
        .filter_map(|l| l.split("fillcolor=\"").nth(1))
        .filter_map(|rest| rest.split('"').next())
        .collect();
    colors.sort_unstable();
    colors.dedup();
    assert_eq!(
        colors.len(),
        group_count,
        "node colors must match the analyze group count"
    );
}

#[test]
fn analyze_rejects_hand_edited_infeasible_flow() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    assert_eq!(exit_code(&solve(&fixture("two-market.json"), &out, &[])), 0);

    let mut artifact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    artifact["flows"][0] = 700.0.into();
    std::fs::write(&out, serde_json::to_string(&artifact).unwrap()).unwrap();

    let output = gridnash(&["analyze", "--artifact", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1, "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("feasible") || stderr.contains("verification"),
        "{stderr}"
    );
}

#[test]
fn analyze_rejects_malformed_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garbage.json");
    std::fs::write(&path, "{ not json").unwrap();
    let output = gridnash(&["analyze", "--artifact", path.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn export_graph_two_market() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    assert_eq!(exit_code(&solve(&fixture("two-market.json"), &out, &[])), 0);

    let dot_path = dir.path().join("eq.dot");
    let output = gridnash(&[
        "export-graph",
        "--artifact",
        out.to_str().unwrap(),
        "--out",
        dot_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    let dot = std::fs::read_to_string(&dot_path).unwrap();
    assert!(dot.contains("digraph"));
    assert!(dot.contains("label=\"1\\np=84\""), "{dot}");
    assert!(dot.contains("label=\"2\\np=100\""), "{dot}");
    assert!(dot.contains("label=\"500/500\""), "{dot}");
    assert!(dot.contains("style=bold"), "{dot}");
    // Two price groups, two distinct fill colors.
    let c1 = dot.matches("#8dd3c7").count();
    let c2 = dot.matches("#ffffb3").count();
    assert_eq!((c1, c2), (1, 1), "{dot}");
}

#[test]
fn export_graph_single_market() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    assert_eq!(exit_code(&solve(&fixture("isolated.json"), &out, &[])), 0);

    let dot_path = dir.path().join("eq.dot");
    let output = gridnash(&[
        "export-graph",
        "--artifact",
        out.to_str().unwrap(),
        "--out",
        dot_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);
    let dot = std::fs::read_to_string(&dot_path).unwrap();
    assert!(dot.contains("label=\"1\\np=72\""), "{dot}");
    assert!(
        !dot.contains("->"),
        "single market must have no edges: {dot}"
    );
}

#[test]
fn br_method_reaches_the_same_prices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.json");
    let output = solve(&fixture("two-market.json"), &out, &["--method", "br"]);
    assert_eq!(exit_code(&output), 0, "{output:?}");
    let artifact = gridnash_cli::artifact::load_artifact(&out).unwrap();
    assert_eq!(artifact.method, "br");
    assert!((artifact.prices[0] - 84.0).abs() < 1e-4);
    assert!((artifact.prices[1] - 100.0).abs() < 1e-4);
}
