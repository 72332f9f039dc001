use std::path::Path;
use std::process::{Command, Output};

fn heterseed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heterseed")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn groups(dir: &Path) -> String {
    let g = dir.join("g").to_string_lossy().into_owned();
    ok(&heterseed(&["gen-synth", "groups", "--groups", "12", "--seed", "3", "--out", &g]));
    g
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(heterseed(&["--help"]).status.code(), Some(0));
    assert_eq!(heterseed(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(heterseed(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(heterseed(&["frobnicate"]).status.code(), Some(1));
    let out = heterseed(&["gen-synth", "sbm", "--base", "x", "--rho", "0.5", "--mode", "sideways", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_graph_exits_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent").to_string_lossy().into_owned();
    let out = heterseed(&["train", "--graph", &missing, "--metapaths", "A-P-A"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: missing file"), "{err}");
}

#[test]
fn bad_metapath_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let out = heterseed(&["analyze", "--graph", &g, "--metapaths", "A-X-A"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let ckpt = dir.path().join("m.ckpt").to_string_lossy().into_owned();
    let log = ok(&heterseed(&[
        "train", "--graph", &g, "--metapaths", "A-P-A", "--epochs", "6", "--hidden", "8", "--beta", "0.5",
        "--checkpoint", &ckpt,
    ]));
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch\tL_cls\tL_dec\tL\tval_macro\tval_micro");
    assert_eq!(lines.len(), 8);
    let test = lines[7];
    let eval = ok(&heterseed(&["eval", "--graph", &g, "--metapaths", "A-P-A", "--checkpoint", &ckpt, "--beta", "0.5"]));
    assert_eq!(eval.trim_end(), test);
}

#[test]
fn mini_batch_and_parallel_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let log = dir.path().join("run.tsv");
    let out = ok(&heterseed(&[
        "train", "--graph", &g, "--metapaths", "A-P-A", "--epochs", "3", "--hidden", "8", "--batch-size", "16",
        "--fanout", "3,3", "--parallel-seeds", "2", "--log", &log.to_string_lossy(),
    ]));
    assert!(out.lines().last().unwrap().starts_with("mean\t"));
    assert!(dir.path().join("run.tsv.seed0").exists() && dir.path().join("run.tsv.seed1").exists());
}

#[test]
fn analyze_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let args = ["analyze", "--graph", &g, "--metapaths", "A-P-A;A-P-A"];
    let a = ok(&heterseed(&args));
    assert_eq!(a, ok(&heterseed(&args)));
    assert!(a.starts_with("metapath\tedges\thomophily\tmean_cosine\n"));
    assert!(a.lines().last().unwrap().starts_with("fit\t"));
}

#[test]
fn bias_sim_matches_closed_form() {
    let out = ok(&heterseed(&["bias-sim", "--q-grid", "0,0.25,1", "--trials", "100", "--seed", "2"]));
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r[3].parse::<f64>().unwrap() < 1e-9);
    }
}

#[test]
fn synth_generators_write_loadable_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let t = dir.path().join("t").to_string_lossy().into_owned();
    ok(&heterseed(&["gen-synth", "theorem1", "--n", "6", "--out", &t]));
    let s = dir.path().join("s").to_string_lossy().into_owned();
    ok(&heterseed(&["gen-synth", "sbm", "--base", &g, "--rho", "1", "--mode", "high", "--out", &s]));
    let out = ok(&heterseed(&["analyze", "--graph", &s, "--metapaths", "A-P-A"]));
    assert!(out.lines().nth(1).unwrap().contains("\t1.000000\t"));
    ok(&heterseed(&["analyze", "--graph", &t, "--metapaths", "A-P-A"]));
}

#[test]
fn homophily_bins_lists_five_bins() {
    let dir = tempfile::tempdir().unwrap();
    let g = groups(dir.path());
    let out = ok(&heterseed(&["homophily-bins", "--graph", &g, "--metapaths", "A-P-A", "--epochs", "3", "--hidden", "8"]));
    assert_eq!(out.lines().count(), 6);
}
