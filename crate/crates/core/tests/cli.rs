use std::path::PathBuf;
use std::process::{Command, Output};

fn program(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs").join(name)
}

fn hofforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hofforge")).args(args).output().expect("spawn hofforge")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bench_writes_one_row_per_variant() {
    let m = program("matmul.hof");
    let o = hofforge(&["bench", m.to_str().unwrap(), "--size", "16", "--block", "4", "--repeats", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rows.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), "variant_id,spine,layouts,checksum,median_ms,misses,hits,acc_elems");
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r[3] == records[0][3]), "checksums differ");
    let times: Vec<f64> = records.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "not sorted by time");
}

#[test]
fn bench_without_timing_is_byte_stable() {
    let m = program("matmul.hof");
    let args = ["bench", m.to_str().unwrap(), "--size", "16", "--block", "4", "--subdiv", "rnz", "--repeats", "0"];
    let (a, b) = (hofforge(&args), hofforge(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 13);
}

#[test]
fn bench_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dot.csv");
    let d = program("dot.hof");
    let o = hofforge(&["bench", d.to_str().unwrap(), "--size", "32", "--repeats", "0", "--csv", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("1,rnz,"));
}

#[test]
fn indivisible_block_is_a_usage_error() {
    let m = program("matmul.hof");
    let o = hofforge(&["bench", m.to_str().unwrap(), "--size", "30", "--subdiv", "rnz"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not divide"));
}

#[test]
fn check_passes_on_the_bundled_programs() {
    for name in ["dot.hof", "matvec.hof", "matmul.hof"] {
        let p = program(name);
        let o = hofforge(&["check", p.to_str().unwrap(), "--sizes", "2,4,8", "--instances", "2"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("PASS"));
    }
}

#[test]
fn corrupted_rule_is_caught_and_named() {
    let m = program("matmul.hof");
    let o = hofforge(&["check", m.to_str().unwrap(), "--sizes", "8,2", "--mutate", "exchange"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rule exchange"), "{err}");
    assert!(err.contains("N=2"), "smallest size first: {err}");
}

#[test]
fn parse_errors_carry_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.hof");
    std::fs::write(&empty, "").unwrap();
    let o = hofforge(&["explain", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":1:1:"));
    let bad = dir.path().join("bad.hof");
    std::fs::write(&bad, "(input u ((4,1)))\n(map (lam (x) y) u)").unwrap();
    let o = hofforge(&["lower", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn explain_lists_the_reachable_orders() {
    let m = program("matmul.hof");
    let o = hofforge(&["explain", m.to_str().unwrap(), "--size", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("mapA rnz mapB"), "{text}");
    assert!(text.contains("(rule exchange)"));
    let mv = program("matvec.hof");
    let text = stdout(&hofforge(&["explain", mv.to_str().unwrap(), "--size", "4"]));
    assert!(text.contains("1c: rnz rnz mapA  [flip 0 1 (flip 1 2 (subdiv 0 2 A)); subdiv 0 2 u]"), "{text}");
}

#[test]
fn enumerate_and_rewrite() {
    let m = program("matmul.hof");
    let o = hofforge(&["enumerate", m.to_str().unwrap(), "--size", "4", "--subdiv-rnz", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 12);
    let s = program("sum_matvec.hof");
    let o = hofforge(&["rewrite", s.to_str().unwrap(), "--rule", "fuse", "--fixpoint", "--size", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(hofs 3 2)"));
    let o = hofforge(&["rewrite", m.to_str().unwrap(), "--rule", "no_such_rule"]);
    assert_eq!(o.status.code(), Some(2));
}
