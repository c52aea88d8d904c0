use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfd-bench")).args(args).output().expect("spawn rfd-bench")
}

fn ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

fn floats(path: &Path, name: &str) -> Vec<f64> {
    column(path, name).iter().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn replay_reproduces_summaries_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let manifest = ok(&[
        "online-bench",
        "--synthetic",
        "600:12",
        "--m",
        "4,8",
        "--alpha0",
        "0,0.5",
        "--seed",
        "3",
        "--repeats",
        "1",
        "--out",
        first.to_str().unwrap(),
    ]);
    ok(&["replay", &manifest, "--out", second.to_str().unwrap()]);
    let recorded: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let summaries = recorded["summary_outputs"].as_array().unwrap();
    assert_eq!(summaries.len(), 5);
    for name in summaries {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sketch_bench_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let manifest = ok(&["sketch-bench", "--synthetic", "300:16", "--m", "3,6", "--repeats", "1", "--out", a.to_str().unwrap()]);
    ok(&["replay", &manifest, "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(a.join("sketch-bench.csv")).unwrap(), fs::read(b.join("sketch-bench.csv")).unwrap());
    assert_eq!(records(&a.join("sketch-bench-timing.csv")).len(), 2);
}

#[test]
fn rank_deficient_stream_is_captured_exactly() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sketch-bench", "--synthetic", "400:25:3", "--m", "5,10,20", "--repeats", "1", "--out", dir.path().to_str().unwrap()]);
    let csv = dir.path().join("sketch-bench.csv");
    for col in ["error_fd", "error_rfd"] {
        for e in floats(&csv, col) {
            assert!(e <= 1e-10, "{col} = {e}");
        }
    }
}

#[test]
fn sketch_errors_respect_their_bounds() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sketch-bench", "--synthetic", "500:30", "--m", "4,8,16", "--fast", "--repeats", "1", "--out", dir.path().to_str().unwrap()]);
    let csv = dir.path().join("sketch-bench.csv");
    let norm = floats(&csv, "ata_norm");
    let (fd, rfd) = (floats(&csv, "error_fd"), floats(&csv, "error_rfd"));
    for (col, errs) in [("bound_fd_k0", &fd), ("bound_fd_khalf", &fd), ("bound_rfd_k0", &rfd), ("bound_rfd_khalf", &rfd)] {
        for ((b, e), n) in floats(&csv, col).iter().zip(errs).zip(&norm) {
            assert!(e * n <= b * (1.0 + 1e-9), "{col}: {} > {b}", e * n);
        }
    }
    for (f, r) in fd.iter().zip(&rfd) {
        assert!(r < f);
    }
}

#[test]
fn counterexample_greedy_loses_the_tail() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["counterexample", "--out", dir.path().to_str().unwrap()]);
    let csv = dir.path().join("counterexample.csv");
    assert_eq!(column(&csv, "method"), ["fd", "rfd", "greedy"]);
    let err = floats(&csv, "relative_error");
    assert!(err[2] >= 10.0 * err[1], "greedy {} vs rfd {}", err[2], err[1]);
    // 30 copies of 0.99² dominate the unit block.
    assert!((err[2] - 1.0).abs() < 1e-12);
    let bounds = column(&csv, "relative_bound");
    for i in 0..2 {
        assert!(err[i] <= bounds[i].parse::<f64>().unwrap() * (1.0 + 1e-9));
    }
    assert_eq!(bounds[2], "");
}

#[test]
fn regret_check_holds_for_every_ridge() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["regret-check", "--t", "500", "--d", "12", "--m", "5", "--alpha0", "0,1", "--out", dir.path().to_str().unwrap()]);
    let csv = dir.path().join("regret-check.csv");
    assert_eq!(column(&csv, "holds"), ["true", "true"]);
    let t_prime = column(&csv, "t_prime");
    assert!(!t_prime[0].is_empty());
    assert!(t_prime[1].is_empty());
}

#[test]
fn traces_are_thinned() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "online-bench",
        "--synthetic",
        "6000:6",
        "--m",
        "3",
        "--repeats",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let trace = dir.path().join("online-bench-trace-rfd_son-m3-alpha0-0.csv");
    let rounds = floats(&trace, "round");
    assert!(rounds.len() <= 2000);
    assert_eq!(rounds[0], 1.0);
    assert_eq!(*rounds.last().unwrap(), 4200.0);
    assert_eq!(rounds[1] - rounds[0], 3.0);
    let summary = dir.path().join("online-bench.csv");
    assert_eq!(column(&summary, "train_rounds"), ["4200"]);
    let acc = floats(&summary, "test_accuracy")[0];
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn libsvm_input_with_held_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.svm");
    let test = dir.path().join("test.svm");
    let mut text = String::new();
    for i in 0..200 {
        let label = if i % 3 == 0 { "-1" } else { "+1" };
        let v = if i % 3 == 0 { -1.0 } else { 1.0 } * (1.0 + (i % 5) as f64 / 10.0);
        text.push_str(&format!("{label} 1:{v} 3:{}\n", (i % 7) as f64 / 7.0));
    }
    fs::write(&train, &text).unwrap();
    fs::write(&test, "+1 1:1.2 4:0.5\n-1 1:-0.9\n").unwrap();
    let out = dir.path().join("out");
    ok(&[
        "online-bench",
        "--dataset",
        train.to_str().unwrap(),
        "--test-dataset",
        test.to_str().unwrap(),
        "--algorithm",
        "full_on",
        "--alpha0",
        "1",
        "--repeats",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary = out.join("online-bench.csv");
    assert_eq!(column(&summary, "m"), [""]);
    assert_eq!(floats(&summary, "test_accuracy"), [1.0]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("online-bench-manifest.json")).unwrap()).unwrap();
    assert!(Path::new(manifest["params"]["source"]["dataset"].as_str().unwrap()).is_absolute());
    assert_eq!(manifest["params"]["algorithm"], "full_on");
}

#[test]
fn full_on_above_the_cap_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&[
        "online-bench",
        "--synthetic",
        "100:30",
        "--algorithm",
        "full_on",
        "--full-on-cap",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("--full-on-cap 20"), "{err}");
    assert!(!dir.path().join("online-bench.csv").exists());
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.svm");
    fs::write(&bad, "+1 1:0.5\n+1 2:oops\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["sketch-bench".into(), "--dataset".into(), bad.display().to_string()],
        vec!["sketch-bench".into(), "--dataset".into(), "/no/such/file".into()],
        vec!["online-bench".into(), "--synthetic".into(), "50:4".into(), "--algorithm".into(), "sgd".into()],
        vec!["online-bench".into(), "--synthetic".into(), "50:4".into(), "--train-fraction".into(), "1.5".into()],
        vec!["counterexample".into(), "--s".into(), "5".into()],
        vec!["regret-check".into(), "--t".into(), "200000".into()],
        vec!["sketch-bench".into(), "--synthetic".into(), "20:4".into(), "--m".into(), "1".into()],
        vec!["replay".into(), dir.path().join("missing.json").display().to_string()],
        vec!["no-such-command".into()],
    ];
    for case in cases {
        let mut args: Vec<&str> = case.iter().map(String::as_str).collect();
        let out_dir = dir.path().join("out");
        args.extend(["--out", out_dir.to_str().unwrap()]);
        if case[0] == "no-such-command" {
            args.truncate(1);
        }
        let out = bench(&args);
        assert!(!out.status.success(), "{case:?} succeeded");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{case:?}: {err}");
        assert!(err.starts_with("rfd-bench: "), "{err}");
    }
    let err = String::from_utf8(bench(&["sketch-bench", "--dataset", bad.to_str().unwrap()]).stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}
