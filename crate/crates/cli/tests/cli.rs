use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hdl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdl"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn split_matches_hand_computed_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("split");
    let o = hdl(&["split", "--config", &fixture("split.toml"), "--out", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = fixtures().join("golden/split");
    for e in fs::read_dir(&golden).unwrap() {
        let name = e.unwrap().file_name();
        let want = fs::read_to_string(golden.join(&name)).unwrap();
        let got = fs::read_to_string(out.join(&name)).unwrap();
        assert_eq!(got, want, "{name:?}");
    }
}

#[test]
fn split_without_predictions_writes_counts_only() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdl(&["split", "--annotations", &fixture("annotations.jsonl"), "--out", "o"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("o");
    assert!(out.join("counts_joints_size.csv").exists());
    assert!(!out.join("epe_joints_size.csv").exists());
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.lines().nth(1).unwrap().ends_with(",-"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdl(&["split", "--annotations", "nope.jsonl"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.jsonl"));

    let o = hdl(&["chi2", "--heatmap", "missing.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.csv"));

    let o = hdl(&["toy-sim", "--config", "absent.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "trials = 5\nhalf_widths = [1]\nbogus = 1\n").unwrap();
    let o = hdl(&["epe-verify", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));

    fs::write(tmp.path().join("bad_sim.toml"), "[sim]\nrows = 8\ncolumns = 6\n").unwrap();
    let o = hdl(&["toy-sim", "--config", "bad_sim.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_and_thread_counts_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdl(&["no-such-command"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_hdl"))
        .args(["sigma-lab", "--out", "o"])
        .env("HDL_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_verification_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // Off the half-pixel lattice the sampled blob is asymmetric and the
    // compensated decode can land farther from the nominal center.
    fs::write(
        tmp.path().join("off.toml"),
        "betas = [20.0]\nsigmas = [0.5]\nxs = [8.0]\nys = [17.25]\n",
    )
    .unwrap();
    let o = hdl(&["bias-sweep", "--config", "off.toml", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(tmp.path().join("o/bias_sweep.csv").exists());
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdl(
        &["toy-sim", "--config", &fixture("toy_sim.toml"), "--iterations", "3", "--seed", "99", "--out", "o"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(tmp.path().join("o/trace_detection_case1_random.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4);
    assert!(trace.starts_with("iter,jx_soft,jy_soft,jx_argmax,jy_argmax,loss,a_s2,grad_max\n"));

    let o = hdl(&["epe-verify", "--config", &fixture("epe_verify.toml"), "--trials", "10", "--out", "e"], tmp.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(tmp.path().join("e/epe_verify.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("10")));
}

#[test]
fn chi2_table_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdl(&["chi2", "--config", &fixture("chi2.toml"), "--out", "o"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let t = fs::read_to_string(tmp.path().join("o/chi2_blob_sigma2.csv")).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], "s,sigma=0.5,sigma=1,sigma=2,sigma=3,best_sigma");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].split(',').nth(1) == Some("-"));
    assert!(tmp.path().join("o/chi2_sharp.csv").exists());
}

#[test]
fn seed_changes_random_outputs_only_when_used() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let o = hdl(&["grad-check", "--config", &fixture("grad_check.toml"), "--seed", seed, "--out", out], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(tmp.path().join(out).join("grad_check.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}
