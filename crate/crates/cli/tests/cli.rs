use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cloudret_cli::{derive_seed, ExperimentConfig, Stream};
use cloudret_core::selection::load_grid;
use cloudret_core::{Checkpoint, EvalReport, Model, SelectionScores};
use tempfile::TempDir;

fn cloudret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudret")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cloudret(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference_grid.csv")
}

#[test]
fn gen_data_writes_schema_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    for out in [&a, &b] {
        ok(&["gen-data", "--sensor", "ABI", "--n", "1000", "--seed", "7", "--out", s(out)]);
    }
    let text = fs::read_to_string(a.join("dataset.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').filter(|c| c.starts_with("refl_")).count(), 6);
    assert_eq!(lines.count(), 1000);
    assert_eq!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(b.join("dataset.csv")).unwrap());
    assert_eq!(fs::read(a.join("config.json")).unwrap(), fs::read(b.join("config.json")).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = cloudret(&["gen-data", "--sensor", "XYZ", "--out", s(&path(&dir, "x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("XYZ"));

    let cfg = path(&dir, "bad.json");
    fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    let out = cloudret(&["gen-data", "--config", s(&cfg), "--out", s(&path(&dir, "y"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = cloudret(&["train", "--n", "50", "--epochs", "1", "--batch-size", "0", "--out", s(&path(&dir, "z"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "file");
    fs::write(&file, "").unwrap();
    let out = cloudret(&["gen-data", "--n", "10", "--out", s(&file.join("sub"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "cfg.json");
    fs::write(&cfg, r#"{"sensor": "VIIRS", "n": 40, "seed": 1}"#).unwrap();
    let out = path(&dir, "g");
    ok(&["gen-data", "--config", s(&cfg), "--seed", "9", "--out", s(&out)]);
    let resolved: ExperimentConfig = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.seed, 9);
    assert_eq!(resolved.n, 40);
    assert_eq!(resolved.sensor.as_str(), "VIIRS");
    let header = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().matches("refl_").count(), 10);
}

#[test]
fn zero_epochs_checkpoint_equals_initialisation() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "t");
    ok(&["train", "--n", "120", "--epochs", "0", "--seed", "4", "--out", s(&out)]);
    let ck = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    let fresh = Model::new(ck.architecture.clone(), derive_seed(4, Stream::Init)).unwrap();
    assert_eq!(ck.restore().unwrap(), fresh);
    assert_eq!(fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 1);
}

#[test]
fn training_lowers_the_loss_and_reloads_exactly() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "t");
    let common = ["--n", "400", "--seed", "2"];
    let mut args = vec!["train", "--epochs", "20", "--lr", "0.003", "--dump-scatter", "--out", s(&out)];
    args.extend(common);
    ok(&args);
    for f in ["checkpoint.json", "history.csv", "standardization.json", "eval_report.json", "config.json", "scatter.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let totals: Vec<f64> = history.lines().skip(1).map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(totals.len(), 20);
    assert!(totals.last().unwrap() < &totals[0]);

    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next().unwrap(), "y_true,y_pred,phase");
    assert!(scatter.lines().skip(1).all(|l| !l.ends_with("clear")));

    let again = path(&dir, "e");
    let ck = out.join("checkpoint.json");
    let mut args = vec!["eval", "--checkpoint", s(&ck), "--out", s(&again)];
    args.extend(common);
    ok(&args);
    assert_eq!(
        fs::read(out.join("eval_report.json")).unwrap(),
        fs::read(again.join("eval_report.json")).unwrap()
    );
}

#[test]
fn ablation_table_and_manifest() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    for out in [&a, &b] {
        ok(&["ablate", "--n", "200", "--epochs", "2", "--variants", "MT-HCR,MT-HCCAR", "--out", s(out)]);
    }
    for f in ["ablation.csv", "manifest.json", "config.json", "reports/MT-HCR.json", "reports/MT-HCCAR.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(a.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].split(',').count(), 2 + EvalReport::COLUMNS.len());
    assert!(rows[1].starts_with("MT-HCR,") && rows[2].starts_with("MT-HCCAR,"));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    let count = |i: usize| manifest["variants"][i]["parameter_count"].as_u64().unwrap();
    assert!(count(1) > count(0));
}

#[test]
fn kfold_grid_feeds_selection() {
    let dir = TempDir::new().unwrap();
    let (seq, par) = (path(&dir, "seq"), path(&dir, "par"));
    let base = ["kfold", "--n", "300", "--k", "3", "--epochs", "2", "--variants", "MT-CR,MT-HCR", "--seed", "5"];
    let mut a = base.to_vec();
    a.extend(["--out", s(&seq)]);
    ok(&a);
    let mut b = base.to_vec();
    b.extend(["--parallel", "--out", s(&par)]);
    ok(&b);
    for f in ["fold_reports.csv", "fold_stats.csv"] {
        assert_eq!(fs::read(seq.join(f)).unwrap(), fs::read(par.join(f)).unwrap(), "{f}");
    }
    let reports = fs::read_to_string(seq.join("fold_reports.csv")).unwrap();
    let rows: Vec<&str> = reports.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("200")));

    let grid = load_grid(&seq.join("fold_stats.csv")).unwrap();
    assert_eq!(grid.len(), 8);
    assert!(grid.iter().all(|c| c.fold_values.len() == 3 && c.dataset == "ABI"));

    let sel = path(&dir, "sel");
    ok(&["select", "--grid", s(&seq.join("fold_stats.csv")), "--order", "MT-CR,MT-HCR", "--out", s(&sel)]);
    assert!(sel.join("selection.json").exists() && sel.join("selection.txt").exists());
}

fn scores(dir: &Path) -> SelectionScores {
    serde_json::from_str(&fs::read_to_string(dir.join("selection.json")).unwrap()).unwrap()
}

#[test]
fn reference_grid_selection() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s");
    ok(&["select", "--grid", s(&fixture()), "--resolution", "0.001", "--out", s(&out)]);
    let sc = scores(&out);
    assert_eq!(sc.p_1se_total["MT-CR"], 0.0);
    assert_eq!(sc.p_1se_total["MT-HCR"], 4.0);
    assert_eq!(sc.p_1se_total["MT-HCCAR"], 8.0);
}

#[test]
fn single_model_wins_every_cell() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture()).unwrap();
    let only: String = text.lines().filter(|l| !l.starts_with("MT-")|| l.starts_with("MT-HCR,")).map(|l| format!("{l}\n")).collect();
    let grid = path(&dir, "one.csv");
    fs::write(&grid, only).unwrap();
    let out = path(&dir, "s");
    ok(&["select", "--grid", s(&grid), "--out", s(&out)]);
    let sc = scores(&out);
    assert_eq!(sc.p_1se_total.len(), 1);
    assert_eq!(sc.p_1se_total["MT-HCR"], 12.0);
    assert_eq!(sc.p_ab_total["MT-HCR"], 0.0);
}

#[test]
fn missing_cell_is_named() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture()).unwrap();
    let holed: String = text
        .lines()
        .filter(|l| !l.starts_with("MT-HCR,VIIRS,R2"))
        .map(|l| format!("{l}\n"))
        .collect();
    let grid = path(&dir, "holed.csv");
    fs::write(&grid, holed).unwrap();
    let out = cloudret(&["select", "--grid", s(&grid), "--out", s(&path(&dir, "s"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MT-HCR/VIIRS/R2"));
}
