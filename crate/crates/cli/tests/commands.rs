use std::fs;
use std::path::Path;

use logitn_cli::commands::{cmd_fit, cmd_select, cmd_simulate, cmd_summarize, Manifest, RunOptions};
use logitn_cli::config::RunConfig;
use logitn_cli::CliError;

fn config(dir: &Path, t: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.simulate.t = t;
    c.chain.iters = 400;
    c.chain.burnin = 100;
    c.chain.thin = 5;
    c.data.path = Some(dir.join("sim/data.csv"));
    c.summarize.angle_points = 36;
    c.summarize.step_points = 20;
    c.summarize.mc_draws = 3;
    c.summarize.lag_points = 5;
    c
}

fn opts(out: &Path) -> RunOptions {
    RunOptions { seed: Some(11), out: Some(out.to_path_buf()), force: false, quiet: true }
}

#[test]
fn simulate_writes_one_row_per_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 250);
    cmd_simulate(&c, &opts(&dir.path().join("sim"))).unwrap();
    let text = fs::read_to_string(dir.path().join("sim/data.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 252);
    assert!(text.starts_with("grid_index,time,x,y,y1,y2,step_length,turning_angle,observed\n"));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sim/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["labels"].as_array().unwrap().len(), 250);

    let again = cmd_simulate(&c, &opts(&dir.path().join("sim")));
    assert!(matches!(again, Err(CliError::OutputExists(_))));
    let forced = RunOptions { force: true, ..opts(&dir.path().join("sim")) };
    cmd_simulate(&c, &forced).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("sim/data.csv")).unwrap(), text);
}

#[test]
fn invalid_k_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 50);
    c.chain.k = 1;
    let out = dir.path().join("never");
    let err = cmd_simulate(&c, &opts(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());
    let err = cmd_fit(&c, &opts(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn fit_reruns_match_and_select_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 60);
    cmd_simulate(&c, &opts(&dir.path().join("sim"))).unwrap();
    let a = cmd_fit(&c, &opts(&dir.path().join("a"))).unwrap();
    let b = cmd_fit(&c, &opts(&dir.path().join("b"))).unwrap();
    let read = |p: &Path| -> Manifest { serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap() };
    let (ma, mb) = (read(&a), read(&b));
    assert_eq!(ma.checksums, mb.checksums);
    assert_eq!(ma.checksums.len(), 7);
    assert_eq!(ma.config, mb.config);
    assert_eq!(fs::read(a.join("samples.csv")).unwrap(), fs::read(b.join("samples.csv")).unwrap());

    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("index.json")).unwrap()).unwrap();
    let mut one = c.clone();
    one.select.ks = vec![c.chain.k];
    one.select.ms = vec![c.chain.m];
    let sel = cmd_select(&one, &opts(&dir.path().join("sel"))).unwrap();
    assert_eq!(sel.cells.len(), 1);
    assert_eq!(sel.cells[0].result.as_ref().unwrap().icl, index["icl"]["icl"].as_f64().unwrap());
    let table = fs::read_to_string(dir.path().join("sel/icl_table.csv")).unwrap();
    assert_eq!(table.lines().nth(1).unwrap().split(',').nth(7), Some("1"));

    let before: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().path()).collect();
    let rows = cmd_summarize(&a).unwrap();
    assert_eq!(rows.len(), 6 + 9 + 4 + 3 + 6);
    assert!(rows.iter().all(|r| r.lower <= r.mean && r.mean <= r.upper));
    let after: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(before, after);
}

#[test]
fn select_errors_when_every_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 40);
    cmd_simulate(&c, &opts(&dir.path().join("sim"))).unwrap();
    c.select.ks = vec![2, 3];
    c.select.ms = vec![3];
    c.design.kind = "csv".into();
    fs::write(dir.path().join("x.csv"), "grid_index,a\n1,1.0\n").unwrap();
    c.design.csv = Some(dir.path().join("x.csv"));
    assert!(cmd_select(&c, &opts(&dir.path().join("sel"))).is_err());
}

#[test]
fn summarize_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_summarize(dir.path()).unwrap_err();
    assert!(matches!(err, CliError::MissingManifest(_)));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}
