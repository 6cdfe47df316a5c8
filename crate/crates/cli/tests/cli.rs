use std::path::Path;
use std::process::{Command, Output};

fn lmdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmdb")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_ratings(dir: &Path) -> String {
    let path = dir.join("u.data");
    let rows = [
        "1\t10\t5\t1", "1\t20\t4\t2", "1\t30\t2\t3", "2\t10\t4\t4", "2\t40\t5\t5", "3\t20\t3\t6", "3\t30\t5\t7",
        "4\t40\t4\t8", "4\t50\t5\t9", "5\t10\t5\t10",
    ];
    std::fs::write(&path, rows.join("\n") + "\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ingest_reports_counts_and_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_ratings(dir.path());
    let out = dir.path().join("out");
    let run = lmdb(&["ingest", "--dataset", &data, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stderr(&run));
    let stdout = String::from_utf8(run.stdout).unwrap();
    // Two ratings of 3 or less are dropped; every user and item keeps a positive.
    assert_eq!(stdout.lines().next().unwrap(), "5 users, 5 items, 8 interactions");
    let users = std::fs::read_to_string(out.join("users.map.csv")).unwrap();
    assert_eq!(users.lines().next().unwrap(), "index,raw_id");
    assert_eq!(users.lines().count(), 6);
    assert!(out.join("summary.txt").is_file() && out.join("manifest.json").is_file());
}

#[test]
fn simulate_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let run = lmdb(&["simulate", "--runs", "2", "--rounds", "25", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stderr(&run));
    let csv = std::fs::read_to_string(out.join("regret.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
    assert!(csv.starts_with("round,scaled_regret,raw_regret,bound,width_sum,width_budget\n"));
}

#[test]
fn manifest_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let run = lmdb(&["approx-ratio", "--users", "5", "--k", "2,3", "--seed", "9", "--out", a.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stderr(&run));
    let manifest = a.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\"command\": \"approx-ratio\"") && text.contains("\"seed\": 9"));
    let again = lmdb(&["rerun", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(std::fs::read(a.join("ratios.csv")).unwrap(), std::fs::read(b.join("ratios.csv")).unwrap());
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let run = Command::new(env!("CARGO_BIN_EXE_lmdb"))
        .args(["approx-ratio", "--users", "2", "--k", "2", "--out", out.to_str().unwrap()])
        .env("LMDB_SEED", "41")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(std::fs::read_to_string(out.join("manifest.json")).unwrap().contains("\"seed\": 41"));
}

#[test]
fn invalid_arguments_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_ratings(dir.path());
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["simulate", "--policy", "oracle", "--rounds", "5"], "oracle"),
        (vec!["simulate", "--k", "0", "--rounds", "5"], "k"),
        (vec!["simulate", "--alpha", "sometimes", "--rounds", "5"], "alpha"),
        (vec!["simulate", "--metric-mode", "angular", "--rounds", "5"], "metric-mode"),
        (vec!["replay", "--dataset", "/nonexistent/u.data"], "/nonexistent/u.data"),
        (vec!["ingest", "--dataset", &data, "--format", "tsv"], "tsv"),
        (vec!["approx-ratio", "--k", "2", "--items", "1"], "items"),
    ];
    for (mut args, needle) in cases {
        args.extend(["--out", out]);
        let run = lmdb(&args);
        assert!(!run.status.success(), "{args:?} should fail");
        let msg = stderr(&run);
        assert!(msg.contains(needle), "{args:?}: {msg}");
    }
    let missing = lmdb(&["rerun", "/nonexistent/manifest.json"]);
    assert!(!missing.status.success());
}

#[test]
fn malformed_ratings_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.data");
    std::fs::write(&path, "1\t2\t5\t0\n1\tnot-a-number\n").unwrap();
    let run = lmdb(&["ingest", "--dataset", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!run.status.success());
    assert!(stderr(&run).contains("bad.data:2:"), "{}", stderr(&run));
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).to_str().unwrap().to_string()
}

#[test]
fn replay_with_bundled_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("replay");
    let (ratings, embeddings) = (fixture("ratings.tsv"), fixture("embeddings.csv"));
    let base = ["replay", "--dataset", &ratings, "--embeddings", &embeddings, "--k", "3"];
    let run = lmdb(&[&base[..], &["--dim", "4", "--rounds", "5", "--out", out.to_str().unwrap()]].concat());
    assert!(run.status.success(), "{}", stderr(&run));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    // Recall, diversity and two F-beta rows per round.
    assert_eq!(csv.lines().count(), 1 + 5 * 4);

    // Thirty items run out after ten rounds of three; the run still succeeds.
    let long = lmdb(&[&base[..], &["--dim", "4", "--rounds", "20", "--out", out.to_str().unwrap()]].concat());
    assert!(long.status.success(), "{}", stderr(&long));
    assert!(String::from_utf8_lossy(&long.stdout).contains("exhausted 8"));

    let wrong = lmdb(&[&base[..], &["--dim", "6", "--out", out.to_str().unwrap()]].concat());
    assert!(!wrong.status.success());
    assert!(stderr(&wrong).contains("e0..e5"), "{}", stderr(&wrong));
}
