//! Exit codes and argument validation of the binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sinkdiv"))
}

#[test]
fn usage_errors_exit_2() {
    // negative regularization
    let out = bin()
        .args(["run", "--eps", "-1", "--nu", "x.csv", "--mu", "y.csv", "--iters", "10", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown flag
    let out = bin().args(["run", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown subcommand
    let out = bin().args(["transmogrify"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // level outside (0, 1)
    let out = bin()
        .args(["run", "--eps", "0.5", "--nu", "x.csv", "--mu", "y.csv", "--iters", "10", "--level", "1.5", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // missing input file
    let out = bin()
        .current_dir(dir.path())
        .args(["run", "--eps", "0.5", "--nu", "no_such.csv", "--mu", "also_missing.csv", "--iters", "10", "--out", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // malformed CSV names the offending row on stderr
    std::fs::write(dir.path().join("bad.csv"), "x1,x2\n0.0,ok\n").unwrap();
    let out = bin()
        .current_dir(dir.path())
        .args(["ingest", "bad.csv", "--out", "clean.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2"), "stderr was: {stderr}");
}

#[test]
fn ingest_normalizes_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("raw.csv"),
        "x1,x2\n5.0,10.0\n10.0,5.0\n7.5,7.5\n",
    )
    .unwrap();
    let out = bin()
        .current_dir(dir.path())
        .args(["ingest", "raw.csv", "--rescale-unit-box", "--out", "clean.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("N = 3"));
    assert!(stdout.contains("d = 2"));
    let clean = std::fs::read_to_string(dir.path().join("clean.csv")).unwrap();
    assert_eq!(clean.lines().count(), 4); // header + 3 rows
    for line in clean.lines().skip(1) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn run_defaults_match_reference_calibration() {
    // eps 0.1 with uniform nu over 4 atoms: auto gamma = eps / (2 * 0.25)
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("nu.csv"),
        "x1,x2\n0.25,0.25\n0.75,0.25\n0.25,0.75\n0.75,0.75\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("mu.csv"), "x1,x2\n0.5,0.5\n0.1,0.9\n").unwrap();
    let out = bin()
        .current_dir(dir.path())
        .args(["run", "--eps", "0.1", "--nu", "nu.csv", "--mu", "mu.csv", "--iters", "100", "--out", "t.csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert_eq!(header, "n,w_hat,sigma_hat,ci_lo,ci_hi,grad_norm,v_0,v_1,v_2,v_3");

    // eps = 0 routes to the unregularized path and prints the caveat
    let out = bin()
        .current_dir(dir.path())
        .args(["run", "--eps", "0", "--nu", "nu.csv", "--mu", "mu.csv", "--iters", "100", "--out", "t0.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eps = 0"), "missing caveat: {stdout}");
}

#[test]
fn stream_mode_reads_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("nu.csv"), "x1,x2\n0.0,0.0\n").unwrap();
    std::fs::write(
        dir.path().join("stream.csv"),
        "x1,x2\n3.0,4.0\n0.0,1.0\n0.0,0.0\n",
    )
    .unwrap();
    // single target atom: w_hat is the running mean of |x| - eps; the stream
    // has 3 rows against a budget of 10, so the run stops at n = 3 with
    // w_hat = (5 + 1 + 0)/3 - 0.5
    let out = bin()
        .current_dir(dir.path())
        .args(["run", "--eps", "0.5", "--nu", "nu.csv", "--mu-stream", "stream.csv", "--iters", "10", "--out", "t.csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stream ended after 3 rows"), "{stdout}");
    assert!(stdout.contains("n = 3"));
    assert!(stdout.contains("w_hat = 1.50000000000e0"), "{stdout}");
}
