use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nvbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvbsim"))
        .args(args)
        .env_remove("NVBSIM_OUT_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--count", "3000", "--pages", "400", "--mean-gap", "2", "--seed", "9", "-o", p(&out)];
    args.extend_from_slice(extra);
    ok(nvbsim(&args));
    out
}

#[test]
fn synth_run_calc_round_trip() {
    let dir = TempDir::new().unwrap();
    let trace = synth(dir.path(), "w.csv", &["--pattern", "zipf"]);
    let out = dir.path().join("out");
    let o = ok(nvbsim(&[
        "run", "--trace", p(&trace), "--scheme", "copa:30", "--dram-pages", "64", "--pja-pages", "64",
        "--check-invariants", "-o", p(&out),
    ]));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let report = json(&out.join("report.json"));
    assert_eq!(printed, report);
    assert_eq!(report["trace_id"], "w");
    assert_eq!(report["scheme"], "CoPA-T30");
    assert_eq!(report["accesses"], 3000);
    assert!(report["max_idle_s"].as_f64().unwrap() < 90.0);

    let o = ok(nvbsim(&[
        "calc",
        p(&out.join("ledger_intervals.csv")),
        "--writes",
        p(&out.join("ledger_writes.csv")),
    ]));
    let calc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(calc["summary"], report["failure"]);
    assert!(calc.get("pages").is_none());
}

#[test]
fn config_file_with_relative_trace() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), "w.csv", &[]);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "trace = 'w.csv'\n[buffer]\ndram_pages = 32\npja_pages = 16\n[scheme]\nkind = 'baseline'\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(nvbsim(&["run", "--config", p(&cfg), "-o", p(&out)]));
    let r = json(&out.join("report.json"));
    assert_eq!(r["scheme"], "Baseline");
    assert!(r["max_idle_s"].as_f64().unwrap() <= 35.0);
    assert_eq!(r["config"]["buffer"]["pja_pages"], 16);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "tracee = 'x'\n").unwrap();
    assert_eq!(code(&nvbsim(&["run", "--config", p(&bad)])), 1);

    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&nvbsim(&["run", "--trace", p(&missing), "-o", p(dir.path())])), 2);

    let trace = synth(dir.path(), "w.csv", &[]);
    let hyb = ["run", "--trace", p(&trace), "--mode", "hyb", "--scheme", "copa:30", "-o", p(dir.path())];
    assert_eq!(code(&nvbsim(&hyb)), 1);
    assert_eq!(code(&nvbsim(&["run", "--trace", p(&trace), "--scheme", "lru"])), 1);
    assert_eq!(code(&nvbsim(&["run", "--bogus-flag"])), 1);

    let mut text = fs::read_to_string(&trace).unwrap();
    text.push_str("not,a,trace,line\n");
    let broken = dir.path().join("broken.csv");
    fs::write(&broken, text).unwrap();
    let out = dir.path().join("b");
    assert_eq!(code(&nvbsim(&["run", "--trace", p(&broken), "--strict", "-o", p(&out)])), 2);
    let o = ok(nvbsim(&["run", "--trace", p(&broken), "-o", p(&out)]));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped 1"));
}

#[test]
fn gzip_trace_matches_plain() {
    let dir = TempDir::new().unwrap();
    let plain = synth(dir.path(), "w.csv", &[]);
    let gz = dir.path().join("w.csv.gz");
    let mut enc = flate2::write::GzEncoder::new(fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(&fs::read(&plain).unwrap()).unwrap();
    enc.finish().unwrap();

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(nvbsim(&["run", "--trace", p(&plain), "-o", p(&a)]));
    ok(nvbsim(&["run", "--trace", p(&gz), "-o", p(&b)]));
    assert_eq!(json(&a.join("report.json")), json(&b.join("report.json")));
}

#[test]
fn out_dir_precedence() {
    let dir = TempDir::new().unwrap();
    let trace = synth(dir.path(), "w.csv", &[]);
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let run = |extra: &[&str]| {
        let mut args = vec!["run", "--trace", p(&trace)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_nvbsim"))
            .args(&args)
            .env("NVBSIM_OUT_DIR", &env_dir)
            .output()
            .unwrap()
    };
    ok(run(&[]));
    assert!(env_dir.join("report.json").exists());
    ok(run(&["-o", p(&flag_dir)]));
    assert!(flag_dir.join("report.json").exists());
}

#[test]
fn grid_writes_manifest_and_tables() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), "w.csv", &[]);
    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        r#"schemes = ["no-pdflush", "baseline", "conv:60", "copa:30"]

[[workloads]]
trace = "w.csv"

[[workloads]]
name = "syn"
[workloads.synthetic]
access_count = 2000
page_universe = 300
write_fraction = 0.6
seed = 3
pattern = { kind = "uniform" }
inter_arrival = { kind = "fixed", seconds = 1.5 }

[base.buffer]
dram_pages = 48
pja_pages = 48
"#,
    )
    .unwrap();
    let out = dir.path().join("g");
    ok(nvbsim(&["grid", p(&cfg), "-o", p(&out)]));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["complete"], true);
    let cells = m["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    for c in cells {
        assert!(out.join(c["report"].as_str().unwrap()).exists());
    }
    for f in ["compare_w.csv", "compare_syn.csv", "plot_storage_writes.csv", "plot_response_time.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join("compare_syn.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("_vs_No-pdflush"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn grid_with_bad_scheme_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(&cfg, "schemes = ['copa:0']\n[[workloads]]\ntrace = 'w.csv'\n").unwrap();
    assert_eq!(code(&nvbsim(&["grid", p(&cfg), "-o", p(dir.path())])), 1);
}

#[test]
fn synth_edge_cases() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("e.csv");
    ok(nvbsim(&["synth", "--count", "0", "-o", p(&empty)]));
    assert_eq!(fs::read_to_string(&empty).unwrap(), "");
    assert_eq!(code(&nvbsim(&["synth", "-o", p(&empty)])), 1);

    // a steeper zipf concentrates more accesses on the hottest page
    let top_share = |theta: &str| {
        let o = ok(nvbsim(&[
            "synth", "--count", "5000", "--pages", "1000", "--pattern", "zipf", "--theta", theta, "--seed", "1",
            "-o", "-",
        ]));
        let text = String::from_utf8(o.stdout).unwrap();
        let mut counts = std::collections::HashMap::new();
        for line in text.lines() {
            *counts.entry(line.split(',').nth(4).unwrap().to_string()).or_insert(0u32) += 1;
        }
        *counts.values().max().unwrap() as f64 / 5000.0
    };
    assert!(top_share("1.3") > top_share("0.9"));
}
