use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hybridlt::data::{class_counts, read_csv, LongTailSpec};
use hybridlt::RunReport;

const TINY: &str = "
n_max = 40
beta = 8
classes = 4
dim = 6
test_per_class = 10
epochs = 4
lr_milestones = 2
batch = 32
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridlt")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn gradcheck_reports_every_loss() {
    let out = run(&["gradcheck", "--instances", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["ce/", "sc/", "psc/", "mpsc/"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{text}");
    }
    for line in text.lines() {
        let err: f64 = line.rsplit('=').next().unwrap().parse().unwrap();
        assert!(err <= 1e-4, "{line}");
    }
}

#[test]
fn gen_data_counts_follow_the_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = run(&["gen-data", "--beta", "100", "--classes", "10", "--out", out]);
    assert!(status.status.success(), "{status:?}");
    let file = fs::File::open(dir.path().join("train.csv")).unwrap();
    let ds = read_csv(std::io::BufReader::new(file), 10).unwrap();
    let spec = LongTailSpec::new(10, 500, 100.0).unwrap();
    assert_eq!(ds.class_counts(), class_counts(&spec).unwrap());
    assert!(dir.path().join("test.csv").is_file());
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = run(&[
        "train", "--config", &cfg, "--loss", "psc", "--alpha-schedule", "parabolic",
        "--seed", "3", "--out", run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    let report =
        RunReport::from_json(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    let alpha = report.alpha_trace();
    assert_eq!((alpha[0], *alpha.last().unwrap()), (1.0, 0.0));
    assert_eq!(report.seed, 3);
    let csv = fs::read_to_string(run_dir.join("epochs.csv")).unwrap();
    let col = csv.lines().next().unwrap().split(',').position(|h| h == "alpha").unwrap();
    let alphas: Vec<f64> =
        csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!((alphas[0], alphas[3]), (1.0, 0.0));

    let out = run(&["eval", "--run", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(eval["top1"].as_f64().unwrap(), report.final_test_top1().unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(&["train", "--config", &cfg, "--epochs", "2", "--loss", "sc", "--tau", "0.5"]);
    assert!(out.status.success(), "{out:?}");
    let report = RunReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(report.epochs.len(), 2);
    assert_eq!(report.loss.to_string(), "sc");
    assert!(report.config.contains("tau = 0.5"), "{}", report.config);
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = run(&["train", "--config", &cfg, "--seed", "9"]);
    let b = run(&["train", "--config", &cfg, "--seed", "9"]);
    let parse = |o: &Output| RunReport::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert_eq!(parse(&a).loss_trace(), parse(&b).loss_trace());
}

#[test]
fn usage_errors_exit_2_with_one_json_line() {
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = run(&["train", "--loss", "hinge"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "tau = -1\n").unwrap();
    let out = run(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("tau"), "{err}");
}

#[test]
fn missing_run_directory_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eval", "--run", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "runtime");
}

#[test]
fn matrix_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.cfg");
    fs::write(
        &cfg,
        format!("{TINY}epochs = 2\nseeds = 1, 2\nvariant.ce-ce = loss = ce-ce\nvariant.psc = loss = psc\n")
            .replace("epochs = 4\n", "")
            .replace("lr_milestones = 2\n", "lr_milestones =\n"),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["matrix", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(out_dir.join("psc/seed2/report.json").is_file());
}
