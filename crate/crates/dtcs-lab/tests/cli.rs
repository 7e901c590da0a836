//! End-to-end tests of the `dtcs` binary: artifact layout, flag handling,
//! determinism, and the structural contracts of each verb.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dtcs"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small synthetic problem: 3 domains → 2 sources after holdout.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        r#"
[data]
domains = 3
classes = 3
samples_per_domain = 60
sigma = 0.3
label_noise = 0.02

[plan]
prophet = "mp"
iterations = 40
epoch_len = 10
batch_size = 8
hidden = [8]

[prophet]
pretrain_epochs = 4
"#,
    )
    .unwrap();
    path
}

fn summary_cells(run_dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(run_dir.join("summary.csv")).unwrap();
    let row = text.lines().nth(1).unwrap_or_default();
    row.split(',').map(str::to_string).collect()
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "erm",
        "--seeds",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    let run_dir = out.join("erm_t0_s0");
    for name in ["config.resolved", "record.jsonl", "diag.json", "summary.csv", "model.ckpt"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    assert!(out.join("summary.csv").exists());
}

#[test]
fn erm_equivalence_alpha_one_no_dcb() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out_erm = tmp.path().join("erm");
    let out_dtcs = tmp.path().join("dtcs");
    run_ok(&["run", "--config", cfg, "--method", "erm", "--seeds", "0", "--out", out_erm.to_str().unwrap()]);
    run_ok(&[
        "run", "--config", cfg, "--method", "dtcs", "--prophet", "mp", "--alpha", "1.0", "--no-dcb",
        "--seeds", "0", "--out", out_dtcs.to_str().unwrap(),
    ]);
    let erm = summary_cells(&out_erm.join("erm_t0_s0"));
    let dtcs = summary_cells(&out_dtcs.join("dtcs-mp_t0_s0"));
    // pooled_val_acc and target_acc columns agree exactly.
    assert_eq!(erm[5], dtcs[5], "pooled val acc differs");
    assert_eq!(erm[6], dtcs[6], "target acc differs");
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["run", "--config", cfg, "--method", "dtcs", "--seeds", "1", "--out", out.to_str().unwrap()]);
    }
    // Seed list `1` keeps the default target 0; run id is <method>_t<target>_s<seed>.
    let rec_a = fs::read(a.join("dtcs-mp_t0_s1").join("record.jsonl")).unwrap();
    let rec_b = fs::read(b.join("dtcs-mp_t0_s1").join("record.jsonl")).unwrap();
    assert!(!rec_a.is_empty());
    assert_eq!(rec_a, rec_b);
}

#[test]
fn invalid_flag_value_exits_two_with_field_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--alpha", "2.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpha"), "stderr: {stderr}");
}

#[test]
fn numeric_failure_leaves_partial_artifacts_and_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("diverge.toml");
    fs::write(
        &path,
        r#"
[data]
domains = 3
classes = 3
samples_per_domain = 60

[plan]
method = "erm"
iterations = 40
epoch_len = 10
batch_size = 8
hidden = [8]

[optim]
lr = 1e160
"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let run_dir = out_dir.join("erm_t0_s0");
    assert!(run_dir.join("failure.json").exists());
    assert!(run_dir.join("record.jsonl").exists());
    let marker = fs::read_to_string(run_dir.join("failure.json")).unwrap();
    assert!(marker.contains("error"));
}

#[test]
fn gen_data_csv_feeds_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let csv = tmp.path().join("data.csv");
    run_ok(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(csv.exists());

    let from_csv = tmp.path().join("from_csv.toml");
    fs::write(
        &from_csv,
        format!(
            r#"
[data]
source = "csv"
csv_path = "{}"

[plan]
method = "erm"
iterations = 20
epoch_len = 10
batch_size = 8
hidden = [8]
"#,
            csv.display()
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    run_ok(&["run", "--config", from_csv.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(out.join("erm_t0_s0").join("summary.csv").exists());
}

#[test]
fn ablate_emits_four_rows_and_row_a_matches_standalone_erm() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["ablate", "--config", cfg, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("ablation").join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header + 4 arms:\n{csv}");
    assert_eq!(lines[0], "row,label,t0,avg");
    assert!(lines[1].starts_with("A,"));
    assert!(lines[4].starts_with("D,"));

    let erm_out = tmp.path().join("erm");
    run_ok(&["run", "--config", cfg, "--method", "erm", "--out", erm_out.to_str().unwrap()]);
    let erm_acc: f64 = summary_cells(&erm_out.join("erm_t0_s0"))[6].parse().unwrap();
    let row_a: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row_a[2].parse::<f64>().unwrap(), erm_acc);
}

#[test]
fn sweep_of_one_point_reproduces_a_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("one_point.toml");
    fs::write(
        &path,
        r#"
[data]
domains = 3
classes = 3
samples_per_domain = 60

[plan]
prophet = "mp"
iterations = 30
epoch_len = 10
batch_size = 8
hidden = [8]

[sweep]
lr = [5e-3]
tau = [2.0]
alpha = [0.1]
momentum = [0.9]
"#,
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let sweep_out = tmp.path().join("sweep_out");
    let out = run_ok(&["sweep", "--config", cfg, "--out", sweep_out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best:"), "{stdout}");
    assert!(sweep_out.join("sweep").join("sweep.csv").exists());
    assert!(sweep_out.join("sweep").join("best.toml").exists());

    let plain_out = tmp.path().join("plain");
    run_ok(&["run", "--config", cfg, "--out", plain_out.to_str().unwrap()]);
    let swept = sweep_out.join("sweep").join("lr0.005_tau2_a0.1_m0.9").join("dtcs-mp_t0_s0");
    let plain = plain_out.join("dtcs-mp_t0_s0");
    assert_eq!(
        fs::read(swept.join("record.jsonl")).unwrap(),
        fs::read(plain.join("record.jsonl")).unwrap()
    );
}

#[test]
fn report_over_identical_runs_has_zero_std() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["run", "--config", cfg, "--method", "erm", "--out", out.to_str().unwrap()]);
    }
    let rep = tmp.path().join("rep");
    run_ok(&[
        "report",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert!(rep.join("report.md").exists());
    assert!(rep.join("conflict.csv").exists());
    let csv = fs::read_to_string(rep.join("accuracy.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "one config group:\n{csv}");
    let header: Vec<&str> = lines[0].split(',').collect();
    let cells: Vec<&str> = lines[1].split(',').collect();
    let std_col = header.iter().position(|h| *h == "t0_std").unwrap();
    assert_eq!(cells[std_col].parse::<f64>().unwrap(), 0.0);
    assert_eq!(cells[header.iter().position(|h| *h == "runs").unwrap()], "2");
}

#[test]
fn worker_env_var_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--method", "erm", "--out", out_dir.to_str().unwrap()])
        .env("DTCS_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let ok_dir = tmp.path().join("ok");
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--method", "erm", "--out", ok_dir.to_str().unwrap()])
        .env("DTCS_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}
