//! The `irmbench` binary: exit codes and output shapes.

use std::process::{Command, Output};

fn irmbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irmbench"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(irmbench(&["--help"]).status.code(), Some(0));
    assert_eq!(irmbench(&["--bogus"]).status.code(), Some(1));
    assert_eq!(
        irmbench(&["train", "--example", "9", "--method", "ERM"]).status.code(),
        Some(1)
    );
    assert_eq!(irmbench(&["selfcheck"]).status.code(), Some(0));
}

#[test]
fn figure1_csv() {
    let o = irmbench(&["figure1", "--samples", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("c,curve,value"));
    assert!(lines.all(|l| l.split(',').count() == 3));
}

#[test]
fn kappa_sweep_csv() {
    let o = irmbench(&["kappa-sweep", "--n", "2000", "--epsilons", "1,2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("epsilon,env,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn train_writes_json_and_suite_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = irmbench(&[
        "--steps",
        "50",
        "--out",
        d,
        "train",
        "--example",
        "3",
        "--method",
        "IGA",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
    assert!(dir.path().join("train_result.json").exists());

    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "examples = 3\nvariants = plain\nseeds = 1\nn_train = 300\nn_test = 300\nsteps = 50\nselection = fixed\n",
    )
    .unwrap();
    let o = irmbench(&[
        "--config",
        cfg.to_str().unwrap(),
        "--methods",
        "ERM",
        "--out",
        d,
        "suite",
    ]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    for f in ["records.csv", "table.txt", "table.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let o = irmbench(&["table", dir.path().join("records.csv").to_str().unwrap()]);
    assert!(stdout(&o).contains("Example3.E0"));
}
