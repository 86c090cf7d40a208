use std::path::Path;
use std::process::{Command, Output};

fn shblab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shblab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_run_from_file_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("problem.txt");
    let o = shblab(&["gen", "--kind", "feasible", "--n", "200", "--d", "5", "--kappa", "30", "--out", path_str(&problem)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("kappa=30"));

    let out = dir.path().join("results");
    let o = shblab(&[
        "run",
        "--problem-file",
        path_str(&problem),
        "--method",
        "sgd,shb-const(a=0.5),twophase",
        "--phase-split",
        "0.25",
        "--batch",
        "1.0",
        "--iters",
        "300",
        "--seeds",
        "1,2",
        "--name",
        "fromfile",
        "--out",
        path_str(&out),
        "--plot",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("shb-const(a=0.5)"));
    assert!(text.contains("twophase(c=0.25)"));

    let root = out.join("fromfile");
    let config = std::fs::read_to_string(root.join("config.txt")).unwrap();
    assert!(config.contains("problem_file"));
    assert!(root.join("plot.svg").exists());
    let sgd_dir = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap() == "sgd")
        .expect("per-method directory");
    assert!(sgd_dir.join("seed_1.csv").exists());
    let agg = std::fs::read_to_string(sgd_dir.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("iter,mean_grad_norm,mean_dist,n_runs,n_diverged"));

    // rerun from the saved config
    let o = shblab(&["run", "--config", path_str(&root.join("config.txt")), "--out", path_str(&dir.path().join("again"))]);
    assert_eq!(o.status.code(), Some(0));

    // plot subcommand over the written aggregates
    let svg = dir.path().join("replot.svg");
    let o = shblab(&["plot", path_str(&sgd_dir.join("aggregate.csv")), "--kappa", "30", "--out", path_str(&svg)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn all_diverged_exits_three() {
    let o = shblab(&[
        "run", "--kind", "diagonal", "--n", "100", "--kappa", "10", "--batch", "10", "--iters", "3000", "--w0", "1",
        "--seeds", "1,2",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_exit_two() {
    let cases: [&[&str]; 5] = [
        &["run", "--kind", "regression", "--n", "100", "--d", "5", "--batch", "500"],
        &["run", "--n", "100", "--d", "5", "--method", "shb-const(a=2)"],
        &["run", "--n", "100", "--d", "5", "--method", "adam"],
        &["preset", "nope", "--dry-run"],
        &["plan", "--iters", "100", "--kappa", "0.5"],
    ];
    for args in cases {
        let o = shblab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_config_file_is_a_plain_failure() {
    let o = shblab(&["run", "--config", "/nonexistent/run.txt"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn presets_list_and_dry_run() {
    let o = shblab(&["preset", "--list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["fig2", "fig3", "fig4d", "fig5grid", "fig6grid", "appC_mis", "lowerbound_fit"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }

    let o = shblab(&["preset", "fig4d", "--dry-run"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("problem = diagonal"));
    assert!(text.contains("sgd(step=max-sample)"));
}

#[test]
fn plan_prints_every_stage() {
    let o = shblab(&["plan", "--iters", "200000", "--kappa", "100", "--n", "1000", "--batch", "900"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let stages = text.lines().filter(|l| !l.starts_with('#')).count();
    assert!(stages >= 3, "{text}");
    assert!(text.contains("batch threshold"));
}

#[test]
fn lowerbound_reports_the_two_sample_minimum() {
    let o = shblab(&["lowerbound", "--beta", "0.63"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("min psi = 1.08"));
}
