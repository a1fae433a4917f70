use std::path::Path;
use std::process::{Command, Output};

fn planmcts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planmcts"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_env_output_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("env.json");
    ok(&planmcts(&["gen-env", "--branching", "3", "--depth", "2", "--seed", "4", "--out", path(&file)]));
    let stdout = ok(&planmcts(&["gen-env", "--branching", "3", "--depth", "2", "--seed", "4"]));
    assert_eq!(std::fs::read_to_string(&file).unwrap().trim(), stdout.trim());
    let g = planmcts::world::PageGraph::from_json(&stdout).unwrap();
    assert_eq!(g.page(g.start()).unwrap().elements.len(), 3);
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    ok(&planmcts(&["run", "--env", "fixture:chain", "--seeds", "0..1", "--out", path(dir.path())]));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "PlanMCTS");
    assert_eq!(row[1], "4");
    assert_eq!(row[2], "100.0000");
    assert_eq!(std::fs::read_dir(dir.path().join("traces")).unwrap().count(), 4);
    assert!(dir.path().join("charts/efficiency.svg").exists());
    assert!(dir.path().join("episodes.csv").exists());
}

#[test]
fn compare_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&planmcts(&[
        "compare",
        "--env",
        "fixture:chain;gen:b=4,d=2,seeds=0..1",
        "--variants",
        "PlanMCTS,ActionMCTS",
        "--out",
        path(dir.path()),
    ]));
    assert!(stdout.starts_with("variant,"));
    assert_eq!(stdout.lines().count(), 3);
    assert!(dir.path().join("comparison.csv").exists());
}

#[test]
fn compare_needs_two_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = planmcts(&["compare", "--env", "fixture:chain", "--variants", "PlanMCTS", "--out", path(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"env": ["fixture:impossible"], "seeds": "0", "search": {"budget": 4}, "variant": "PlanMCTS"}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    ok(&planmcts(&["run", "--config", path(&cfg), "--budget", "6", "--out", path(&out_dir)]));
    let episodes = std::fs::read_to_string(out_dir.join("episodes.csv")).unwrap();
    let header: Vec<&str> = episodes.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = episodes.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("budget"), "6");
    assert_eq!(col("iterations_used"), "6");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"env": ["fixture:chain"], "budgte": 3}"#).unwrap();
    let out = planmcts(&["run", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budgte"));
}

#[test]
fn ablate_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&planmcts(&["ablate", "--env", "fixture:popup", "--seeds", "0..2", "--out", path(dir.path())]));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv, stdout);
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn missing_env_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = planmcts(&["run", "--out", path(dir.path())]);
    assert!(!out.status.success());
}
