use std::path::Path;
use std::process::{Command, Output};

fn srmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srmac")).args(args).env_remove("SRMAC_JOBS").output().expect("spawn srmac")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn verify_small_format_exits_zero() {
    let out = srmac(&["verify", "--fmt", "E3M2", "--r", "5", "--draws", "exhaustive", "--pairs", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["equivalence"]["scope"], "exhaustive");
    assert_eq!(v["equivalence"]["mismatches"], 0);
    assert_eq!(v["rn_closure"]["mismatches"], 0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(srmac(&["verify", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(srmac(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(srmac(&["round", "--fmt", "E9", "--value", "1"]).status.code(), Some(2));
    assert_eq!(srmac(&["add", "--fmt", "E6M5", "--x", "0.1", "--y", "1"]).status.code(), Some(2));
    assert_eq!(srmac(&["--help"]).status.code(), Some(0));
}

#[test]
fn stagnation_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let p = path.to_str().unwrap();
    let out = srmac(&["stagnation", "--n", "2000", "--term", "2^-10", "--fmt", "E6M5", "--modes", "rn,sr", "--r", "13", "--seeds", "100", "--out", p]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mode,r,seed,final,exact,relative_error");
    assert_eq!(lines.len(), 1 + 101);
    assert!(lines[1].starts_with("rn,,,"));
    assert!(lines[2].starts_with("sr-lazy,13,1,"));
}

#[test]
fn add_all_draws_histogram() {
    let out = srmac(&["add", "--fmt", "E6M5", "--mode", "sr-eager", "--r", "9", "--x", "1", "--y", "2^-7", "--all-draws"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    // 1 + 2^-7 lies a quarter of the way between 1 and 1 + 2^-5.
    assert_eq!(v["expected_up_count"], 128);
    assert_eq!(v["up_count"], 128);
    assert_eq!(v["histogram"].as_array().unwrap().len(), 2);
}

#[test]
fn round_and_mac_report() {
    let out = srmac(&["round", "--fmt", "E6M5", "--mode", "rn", "--value", "1.015625"]);
    assert_eq!(json(&out)["result"]["value"], 1.0);
    let out = srmac(&["mac", "--mode", "rn", "--x", "1,2,-0.5", "--y", "1.5,0.25,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["result"]["value"], 1.0);
    assert_eq!(v["exact"], 1.0);
    assert_eq!(v["stats"]["steps"], 3);
}

#[test]
fn gemm_reads_and_writes_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.txt"), dir.path().join("b.txt"), dir.path().join("c.txt"));
    std::fs::write(&a, "dims: 2 3\n1,2,3\n-1,0.5,0.25\n").unwrap();
    std::fs::write(&b, "dims: 3 1\n1\n1\n2\n").unwrap();
    let out = srmac(&["gemm", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--mode", "rn", "--out", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&c).unwrap(), "dims: 2 1\n9.0\n0.0\n");
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# stagnation defaults\nn = 500\nmodes = rn,sr\nr = 9\nseeds = 4\n").unwrap();
    let out_a = dir.path().join("a.csv");
    let c = conf.to_str().unwrap();
    let o = srmac(&["--config", c, "stagnation", "--seeds", "2", "--out", out_a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(&out_a)).unwrap();
    assert_eq!(text.lines().count(), 1 + 1 + 2);
    assert!(text.lines().all(|l| !l.starts_with("truncate")));
    assert!(text.contains("sr-lazy,9,2,"));

    std::fs::write(&conf, "n = 500\nunknown-key = 3\n").unwrap();
    assert_eq!(srmac(&["--config", c, "stagnation"]).status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["stagnation", "--n", "3000", "--modes", "rn,truncate,sr,sr-eager", "--r", "4,13", "--seeds", "6"],
        &["train", "--mode", "sr", "--r", "9", "--seeds", "2", "--epochs", "2", "--n-train", "512", "--batch", "128"],
        &["sweep-r", "--rs", "2,9", "--seeds", "3", "--n", "2000", "--epochs", "2", "--n-train", "512", "--batch", "256"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut files = Vec::new();
        for jobs in ["1", "3"] {
            let p = dir.path().join(format!("{k}-{jobs}.csv"));
            let mut full: Vec<&str> = args.to_vec();
            let ps = p.to_str().unwrap().to_string();
            full.extend(["--jobs", jobs, "--out", &ps]);
            let o = srmac(&full);
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            files.push(read(&p));
        }
        assert_eq!(files[0], files[1], "{args:?}");
    }
}
