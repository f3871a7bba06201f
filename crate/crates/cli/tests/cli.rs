use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nak")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nak(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SYNTH: &str = "n_students = 250\nseed = 3\n";
const TRAIN: &str = "model = \"nak_sparse\"\nd = 8\nl = 4\ngamma = 0.5\nlearning_rate = 0.01\nepochs = 3\nbatch_size = 32\nseed = 1\n";

/// Synthetic data plus a split, in a fresh directory.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let w = Workspace { dir };
        fs::write(w.path("synth.toml"), SYNTH).unwrap();
        fs::write(w.path("train.toml"), TRAIN).unwrap();
        ok(&["synth", "--config", s(&w.path("synth.toml")), "--out", s(&w.path("data"))]);
        ok(&[
            "split",
            "--data",
            s(&w.path("data/grades.csv")),
            "--train-end",
            "2015FA",
            "--val",
            "2016SP..2016SP",
            "--test",
            "2016FA..2017SP",
            "--out",
            s(&w.path("split")),
        ]);
        w
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn train(&self, out: &str) -> PathBuf {
        let ckpt = self.path(out);
        ok(&[
            "train",
            "--config",
            s(&self.path("train.toml")),
            "--split",
            s(&self.path("split")),
            "--out",
            s(&ckpt),
        ]);
        ckpt
    }

    fn eval(&self, ckpt: &Path, out: &str) -> String {
        ok(&[
            "eval",
            "--model",
            s(ckpt),
            "--split",
            s(&self.path("split")),
            "--out",
            s(&self.path(out)),
        ])
    }
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn train_then_eval_is_deterministic() {
    let w = Workspace::new();
    let a = w.train("a.json");
    let b = w.train("b.json");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let table = w.eval(&a, "ra");
    w.eval(&b, "rb");
    assert_eq!(
        fs::read(w.path("ra/a.report.txt")).unwrap(),
        fs::read(w.path("rb/b.report.txt")).unwrap()
    );
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Model", "RMSE", "PTA0", "PTA1", "PTA2"]);
    assert!(table.contains("NAK(sparse)"));
}

#[test]
fn subcommands_are_idempotent() {
    let w = Workspace::new();
    let before = (read_dir(&w.path("data")), read_dir(&w.path("split")));
    ok(&["synth", "--config", s(&w.path("synth.toml")), "--out", s(&w.path("data"))]);
    ok(&[
        "split",
        "--data",
        s(&w.path("data/grades.csv")),
        "--train-end",
        "2015FA",
        "--val",
        "2016SP..2016SP",
        "--test",
        "2016FA..2017SP",
        "--out",
        s(&w.path("split")),
    ]);
    assert_eq!(before, (read_dir(&w.path("data")), read_dir(&w.path("split"))));

    let ckpt = w.train("m.json");
    let first = fs::read(&ckpt).unwrap();
    w.eval(&ckpt, "r");
    let reports = read_dir(&w.path("r"));
    w.train("m.json");
    w.eval(&ckpt, "r");
    assert_eq!(fs::read(&ckpt).unwrap(), first);
    assert_eq!(read_dir(&w.path("r")), reports);
}

#[test]
fn explain_rows_are_sorted_and_sum_to_one() {
    let w = Workspace::new();
    let ckpt = w.train("m.json");
    let grades = fs::read_to_string(w.path("data/grades.csv")).unwrap();
    // A late-term enrollment of the first student has plenty of priors.
    let last = grades.lines().skip(1).filter(|l| l.starts_with("S000,")).last().unwrap();
    let course = last.split(',').nth(1).unwrap();
    let out = ok(&[
        "explain",
        "--model",
        s(&ckpt),
        "--split",
        s(&w.path("split")),
        "--student",
        "S000",
        "--targets",
        course,
    ]);
    let mut lines = out.lines();
    let head = lines.next().unwrap();
    let sum: f64 = head
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("attention_sum="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((sum - 1.0).abs() < 1e-6, "{head}");
    assert_eq!(lines.next(), Some("course,term_offset,grade,weight"));
    let weights: Vec<f64> = lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!weights.is_empty());
    assert!(weights.windows(2).all(|w| w[0] >= w[1]));
    assert!(weights.iter().all(|&x| x > 0.0));
    assert!(weights.iter().sum::<f64>() <= 1.0 + 1e-5);
}

#[test]
fn grid_writes_a_ranked_table() {
    let w = Workspace::new();
    fs::write(w.path("grid.toml"), "d = [4, 8]\nepochs = [1]\n").unwrap();
    let table = ok(&[
        "grid",
        "--config",
        s(&w.path("train.toml")),
        "--grids",
        s(&w.path("grid.toml")),
        "--split",
        s(&w.path("split")),
        "--out",
        s(&w.path("grid.csv")),
        "--jobs",
        "2",
    ]);
    assert_eq!(fs::read_to_string(w.path("grid.csv")).unwrap(), table);
    assert_eq!(table.lines().count(), 3);
}

fn failure(args: &[&str]) -> (i32, String) {
    let out = nak(args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), stderr)
}

fn assert_one_line(code: &str, (status, stderr): (i32, String)) {
    assert_ne!(status, 0);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with(&format!("error: {code}: ")), "{stderr}");
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_one_line("usage", failure(&["frobnicate"]));
    assert_one_line("usage", failure(&["train", "--config", "x"]));
    assert_one_line(
        "usage",
        failure(&["split", "--data", "x", "--train-end", "2015XX", "--val", "a", "--test", "b", "--out", "o"]),
    );
    assert_one_line(
        "io",
        failure(&["eval", "--model", s(&missing), "--split", s(&missing)]),
    );

    let bad_config = dir.path().join("bad.toml");
    fs::write(&bad_config, "colour = 3\n").unwrap();
    assert_one_line(
        "config",
        failure(&["synth", "--config", s(&bad_config), "--out", s(&dir.path().join("o"))]),
    );

    let bad_data = dir.path().join("bad.csv");
    fs::write(&bad_data, "student_id,course_id,term,grade\ns1,c1,2015FA,Q\n").unwrap();
    let (status, stderr) = failure(&[
        "split",
        "--data",
        s(&bad_data),
        "--train-end",
        "2015FA",
        "--val",
        "2016SP..2016SP",
        "--test",
        "2016FA..2017SP",
        "--out",
        s(&dir.path().join("split")),
    ]);
    assert_ne!(status, 0);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
}

#[test]
fn explain_rejects_models_without_attention() {
    let w = Workspace::new();
    fs::write(w.path("mf.toml"), "model = \"mf\"\nd = 4\nepochs = 1\n").unwrap();
    let ckpt = w.path("mf.json");
    ok(&[
        "train",
        "--config",
        s(&w.path("mf.toml")),
        "--split",
        s(&w.path("split")),
        "--out",
        s(&ckpt),
    ]);
    assert_one_line(
        "parameter",
        failure(&[
            "explain",
            "--model",
            s(&ckpt),
            "--split",
            s(&w.path("split")),
            "--student",
            "S000",
            "--targets",
            "C00",
        ]),
    );
}
