use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
hidden = [16, 8]

[training]
epochs = 2
batch_size = 32

[uncertainty]
k = 5

[[scenarios]]
kind = "FreespaceLeft"
velocity = 0.4
sample_rate = 5.0
bends = 3
seed = 1

[[scenarios]]
kind = "BaseRight"
velocity = 0.4
sample_rate = 5.0
bends = 3
seed = 2

[[scenarios]]
kind = "TipLeft"
velocity = 0.4
sample_rate = 5.0
bends = 1
seed = 3
"#;

fn cdm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdm-shape"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(cdm(&["verify"], dir.path()));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
}

#[test]
fn full_pipeline_on_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), TINY).unwrap();
    let cfg = ["--config", "run.toml"];

    ok(cdm(&[&cfg[..], &["gen", "--out", "a"]].concat(), d));
    ok(cdm(&[&cfg[..], &["gen", "--out", "b"]].concat(), d));
    for f in ["train.csv", "test_id.csv", "test_ood.csv", "generation.json"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(d.join("b").join(f)).unwrap(), "{f} differs");
    }

    ok(cdm(&[&cfg[..], &["train", "--data", "a", "--out", "m"]].concat(), d));
    let curve = std::fs::read_to_string(d.join("m/loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("epoch,train_mse,val_mse"));
    assert_eq!(curve.lines().count(), 3);

    let report = ok(cdm(&[&cfg[..], &["eval", "--data", "a", "--models", "m", "--out", "r"]].concat(), d));
    assert!(report.contains("DNN"), "{report}");
    assert!(d.join("r/report.json").exists());

    let summary = ok(cdm(&["report", "--table", "r/uncertainty.csv"], d));
    assert!(summary.contains("false_positives="), "{summary}");

    let header: Vec<String> = (1..=8).map(|i| format!("dl{i}")).collect();
    std::fs::write(d.join("zero.csv"), format!("{}\n{}\n", header.join(","), ["0"; 8].join(","))).unwrap();
    ok(cdm(
        &["infer", "--input", "zero.csv", "--output", "pred.csv", "--model", "m/mlp.cdms", "--k", "4"],
        d,
    ));
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("row,p1x,p1y"));
    assert!(lines[0].ends_with("u30x,u30y"));
    assert_eq!(lines[1].split(',').count(), 121);
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_eq!(code(&cdm(&["frobnicate"], d)), 2);

    let missing = cdm(&["--config", "nope.toml", "config"], d);
    assert_eq!(code(&missing), 4);
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error kind=io code=4"));

    std::fs::write(d.join("bad.toml"), "[model]\ndropout = 1.5\n").unwrap();
    assert_eq!(code(&cdm(&["--config", "bad.toml", "config"], d)), 3);

    std::fs::write(d.join("junk.cdms"), b"not a checkpoint").unwrap();
    std::fs::write(d.join("in.csv"), "dl1,dl2,dl3,dl4,dl5,dl6,dl7,dl8\n0,0,0,0,0,0,0,0\n").unwrap();
    let junk = cdm(&["infer", "--input", "in.csv", "--output", "o.csv", "--model", "junk.cdms"], d);
    assert_eq!(code(&junk), 5);

    std::fs::write(d.join("short.csv"), "dl1,dl2\n0,0\n").unwrap();
    let short = cdm(&["infer", "--input", "short.csv", "--output", "o.csv", "--model", "junk.cdms"], d);
    assert_eq!(code(&short), 5);
}

#[test]
fn config_prints_loadable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(cdm(&["config"], dir.path()));
    std::fs::write(dir.path().join("echo.toml"), &text).unwrap();
    assert_eq!(ok(cdm(&["--config", "echo.toml", "config"], dir.path())), text);
}
