use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amp_core::bench::{Benchmark, QuadLayout};
use amp_core::classify::ThresholdVector;
use amp_core::sweep::{sweep, EvalOptions, Grid};

fn amp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amp")).args(args).output().expect("spawn amp")
}

fn ok(args: &[&str]) -> String {
    let o = amp(args);
    assert!(o.status.success(), "amp {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn quad_files(dir: &Path) -> (PathBuf, PathBuf) {
    ok(&["bench", "quad", "--n", "20", "--out-dir", s(dir)]);
    (dir.join("quad20.nir"), dir.join("quad20.manifest"))
}

#[test]
fn staged_pipeline_matches_in_process_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, man) = quad_files(dir.path());
    let tv = "t1=5,t2=12,t3=10,t4=16,t5=12";
    let t: ThresholdVector = tv.parse().unwrap();
    let p = dir.path().join("p.json");
    let ics = dir.path().join("ics.json");
    let mixed = dir.path().join("mixed.nir");
    let out = dir.path().join("out.json");
    ok(&["profile", s(&prog), "--input", s(&man), "--out", s(&p)]);
    ok(&["classify", s(&prog), "--profile", s(&p), "--thresholds", tv, "--out", s(&ics)]);
    ok(&["rewrite", s(&prog), "--ics", s(&ics), "--out", s(&mixed)]);
    let stdout = ok(&["run", s(&mixed), "--input", s(&man), "--against", "f64", "--out", s(&out)]);

    let b = Benchmark::quad(20, QuadLayout::Newton).unwrap();
    let r = sweep(&b.program, &b.input, &b.input, &Grid::single(&t), b.metric, EvalOptions::default()).unwrap();
    let rec = &r.records[0];
    assert!(!r.variants[0].ics.is_empty());
    assert_eq!(fs::read_to_string(&ics).unwrap(), r.variants[0].ics.to_json());
    assert!(stdout.contains(&format!("accuracy {:e}", rec.accuracy)), "{stdout}");
    assert!(stdout.contains(&format!("scalar cost {}", rec.scalar_cost)), "{stdout}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let ret = doc["ret"].as_f64().unwrap();
    assert_eq!((ret - r.baselines.double.ret.unwrap()).abs().to_bits(), rec.accuracy.to_bits());
}

#[test]
fn three_value_sweep_writes_every_vector() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, man) = quad_files(dir.path());
    let csv = dir.path().join("s.csv");
    let report = dir.path().join("r.json");
    let grid = dir.path().join("3x7.cfg");
    ok(&["sweep", s(&prog), "--input", s(&man), "--grid", s(&grid), "--csv", s(&csv), "--report", s(&report)]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2188);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let total: u64 = rep["r_sets"].as_array().unwrap().iter().map(|r| r["size"].as_u64().unwrap()).sum();
    assert_eq!(total, 2187);
    assert_eq!(rep["grid_size"], 2187);
}

#[test]
fn runs_write_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bench", "lu", "--n", "12", "--seed", "3", "--out-dir", s(dir.path())]);
    let prog = dir.path().join("lu12.nir");
    let man = dir.path().join("lu12.manifest");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&["run", s(&prog), "--input", s(&man), "--out", s(&a)]);
    ok(&["run", s(&prog), "--input", s(&man), "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn mul_sub_rewrite_promotes_the_cancelling_pair() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("f.nir");
    fs::write(
        &prog,
        "func @f(%A: arr<f32, 2>) -> f32 {\n\
         entry:\n\
           %r1 = load f32 %A, 0\n\
           %r2 = load f32 %A, 1\n\
           %r3 = fmul f32 %r1, %r2\n\
           %r4 = fsub f32 %r1, %r3\n\
           ret %r4\n\
         }\n",
    )
    .unwrap();
    let man = dir.path().join("f.manifest");
    fs::write(&man, "array.A.type=f32\narray.A.len=2\narray.A.data=f.A.txt\n").unwrap();
    fs::write(dir.path().join("f.A.txt"), "1.0000001\n0.9999390840530396\n").unwrap();
    let p = dir.path().join("p.json");
    let ics = dir.path().join("ics.json");
    ok(&["profile", s(&prog), "--input", s(&man), "--out", s(&p)]);
    ok(&["classify", s(&prog), "--profile", s(&p), "--thresholds", "t1=100,t5=4", "--out", s(&ics)]);
    let text = ok(&["rewrite", s(&prog), "--ics", s(&ics)]);
    assert!(text.contains("fmul f64"), "{text}");
    assert!(text.contains("fsub f64"), "{text}");
    assert_eq!(text.matches("fpext").count(), 2, "{text}");
}

#[test]
fn bad_flags_exit_with_usage_status() {
    assert_eq!(amp(&["run"]).status.code(), Some(2));
    assert_eq!(amp(&["sweep", "x", "--input", "y", "--preset", "5"]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("bad.nir");
    fs::write(&prog, "func @f( {").unwrap();
    let o = amp(&["profile", s(&prog), "--input", "missing.manifest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse"));
}
