use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mppac");

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn mppac(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("MPPAC_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn parse_csv(text: &str) -> Vec<[f64; 4]> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_s,episodes,lower,upper"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3]]
        })
        .collect()
}

#[test]
fn lint_reports_valid_models() {
    let o = mppac(&["lint", &model("random5.mdp")]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("OK, 5 states"), "{out}");
    assert!(out.contains("reachable states 5"));
    assert!(out.contains("consistent"));
}

#[test]
fn lint_passes_parse_errors_through() {
    let dir = tempfile::tempdir().unwrap();
    let bad_sum = write(&dir, "sum.mdp", "mdp\nstates 2\ninit 0\npmin 0.5\nt 0 a 0 0.5\nt 0 a 1 0.6\nt 1 a 1 1\n");
    let o = mppac(&["lint", &bad_sum]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("(0,a)"), "{}", stderr(&o));

    let zero = write(&dir, "zero.ctmdp", "ctmdp\nstates 1\ninit 0\npmin 1\nt 0 a 0 0\n");
    let o = mppac(&["lint", &zero]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("rate"), "{}", stderr(&o));
}

#[test]
fn run_writes_a_converged_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let svg = dir.path().join("t.svg");
    let o = mppac(&[
        "run",
        "--model",
        &model("twomec.mdp"),
        "--mode",
        "blackbox",
        "--seed",
        "1",
        "--csv",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap());
    let last = rows.last().unwrap();
    assert!(last[3] - last[2] < 0.02);
    for w in rows.windows(2) {
        assert!(w[0][0] < w[1][0] && w[0][1] < w[1][1]);
    }
    assert!(rows.iter().all(|r| r[2] <= r[3]));
    let plot = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(plot.matches("<polyline").count(), 2);
    assert!(stdout(&o).contains("converged"));
}

#[test]
fn repeated_runs_write_one_trace_each_and_report_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rep.csv");
    let o = mppac(&[
        "run",
        "--model",
        &model("absorbing.mdp"),
        "--repeat",
        "3",
        "--seeds",
        "1..3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for seed in 1..=3 {
        assert!(dir.path().join(format!("rep-seed{seed}.csv")).exists());
    }
    assert!(stdout(&o).contains("coverage 3/3"), "{}", stdout(&o));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let o = Command::new(BIN)
        .args(["run", "--model", &model("absorbing.mdp")])
        .env("MPPAC_SEED", "17")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("seed 17:"), "{}", stdout(&o));
}

#[test]
fn greybox_modes_run() {
    for mode in ["greybox", "blackbox-grey-updates"] {
        let o = mppac(&["run", "--model", &model("twomec.mdp"), "--mode", mode, "--clock", "virtual"]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        assert!(stdout(&o).contains("inconfidence"));
    }
}

#[test]
fn ctmdp_runs_with_the_exact_sweep() {
    let o = mppac(&[
        "run",
        "--model",
        &model("rates21.ctmdp"),
        "--kind",
        "ctmdp",
        "--exact-mec-bounds",
        "--absolute",
        "--epsilon",
        "0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn kind_mismatch_is_an_error() {
    let o = mppac(&["run", "--model", &model("rates21.ctmdp"), "--kind", "mdp"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ctmdp"));
}

#[test]
fn missing_model_fails() {
    let o = mppac(&["run", "--model", "/nonexistent/x.mdp"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("reading"));
}

#[test]
fn solve_whitebox_prints_the_value() {
    let o = mppac(&["solve-whitebox", "--model", &model("three_mecs.mdp"), "--enumerate"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let first: f64 = out.lines().next().unwrap().parse().unwrap();
    assert!((first - 5.005).abs() < 1e-5);
    assert!(out.contains("enumerated"));
}

#[test]
fn rates_table_has_four_rows() {
    let o = mppac(&["rates-table"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn anytime_runs_until_the_round_limit() {
    let o = mppac(&[
        "run",
        "--model",
        &model("absorbing.mdp"),
        "--anytime",
        "--max-rounds",
        "3",
        "--episodes-per-round",
        "10",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("round limit after 3 rounds"), "{}", stdout(&o));
}
