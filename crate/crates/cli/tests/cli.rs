use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparse_accel_sim::{LayerFile, RunReport, Verdict};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-accel-sim"));
    c.env_remove("SPARSE_ACCEL_SIM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/weight_skip_example.layer.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn schema_check(path: &Path) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("docs/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn cycles(report: &RunReport, arch: &str) -> u64 {
    report.rows.iter().find(|r| r.arch == arch).unwrap().cycles
}

#[test]
fn gen_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let layer = dir.path().join("l.layer");
    let out = run(&["gen", "--dims", "8x8x32", "--filters", "4x3x3", "--pa", "0.5", "--seed", "7", "-o", s(&layer)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("zero"));
    let loaded = LayerFile::load(&layer).unwrap();
    assert_eq!(loaded.acts.dims().depth, 32);
    assert_eq!(loaded.filters.count(), 4);

    let json = dir.path().join("r.json");
    let out = run(&["run", "--layer", s(&layer), "--json", s(&json), "--lanes", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    schema_check(&json);
    let report = RunReport::load(&json).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.all_pass());
    assert_eq!(report.rows[0].layer, "l");
}

#[test]
fn json_fixture_gen_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.layer.json");
    let out = run(&["gen", "--dims", "3x3x5", "--filters", "2x2x2", "--brick", "4", "-o", s(&path)]);
    assert!(out.status.success());
    let a = LayerFile::load(&path).unwrap();
    let bin_path = dir.path().join("small.layer");
    a.save(&bin_path).unwrap();
    assert_eq!(LayerFile::load(&bin_path).unwrap(), a);
}

#[test]
fn invalid_probability_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--pa", "1.5", "-o", s(&dir.path().join("x.layer"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert!(!dir.path().join("x.layer").exists());
}

#[test]
fn dense_layer_has_unit_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let layer = dir.path().join("d.layer");
    assert!(run(&["gen", "--dims", "6x6x32", "--filters", "4x3x3", "--pa", "0", "-o", s(&layer)]).status.success());
    let json = dir.path().join("r.json");
    for lanes in ["16", "2"] {
        let out = run(&["run", "--layer", s(&layer), "--lanes", lanes, "--json", s(&json)]);
        assert!(out.status.success());
        let report = RunReport::load(&json).unwrap();
        let cnv = report.rows.iter().find(|r| r.arch == "cnv").unwrap();
        assert_eq!(cnv.speedup, Some(1.0));
    }
}

#[test]
fn worked_example_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let trace = dir.path().join("t.txt");
    let out = run(&["run", "--layer", s(&fixture()), "--json", s(&json), "--csv", s(&csv), "--trace", s(&trace)]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.split_whitespace().take(3).eq(["weight_skip_example", "cnv", "3"])));
    assert!(table.lines().any(|l| l.split_whitespace().take(3).eq(["weight_skip_example", "cnv2", "2"])));
    let report = RunReport::load(&json).unwrap();
    assert_eq!(cycles(&report, "cnv"), 3);
    assert_eq!(cycles(&report, "cnv2"), 2);
    assert_eq!(RunReport::load(&csv).unwrap().rows, report.rows);
    schema_check(&json);
    let lines: Vec<String> = fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0], "0,0,0,1");
    assert_eq!(lines[5], "1,1,IDLE");
    assert_eq!(lines[11], "2,3,3,8");
}

#[test]
fn all_zero_weights_skip_everything() {
    let dir = tempfile::tempdir().unwrap();
    let layer = dir.path().join("z.layer");
    let out = run(&["gen", "--dims", "4x4x32", "--filters", "4x1x1", "--pa", "0.3", "--pw", "1", "-o", s(&layer)]);
    assert!(out.status.success());
    let json = dir.path().join("r.json");
    let out = run(&["run", "--layer", s(&layer), "--lanes", "2", "--json", s(&json)]);
    assert!(out.status.success());
    let report = RunReport::load(&json).unwrap();
    let cnv2 = report.rows.iter().find(|r| r.arch == "cnv2").unwrap();
    assert_eq!(cnv2.macs_performed, 0);
    assert_eq!(cnv2.cycles, 0);
    assert_eq!(cnv2.speedup, None);
    assert_eq!(cnv2.verdict, Verdict::Pass);
    schema_check(&json);
}

#[test]
fn baseline_only() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let out = run(&["run", "--dims", "5x5x16", "--filters", "2x3x3", "--arch", "baseline", "--json", s(&json)]);
    assert!(out.status.success());
    let report = RunReport::load(&json).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].speedup, Some(1.0));
    assert_eq!(report.rows[0].verdict, Verdict::Pass);
}

#[test]
fn compare_merges_with_geomean() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    assert!(run(&["run", "--layer", s(&fixture()), "--json", s(&json)]).status.success());
    let merged = dir.path().join("m.csv");
    let out = run(&["compare", s(&json), "-o", s(&merged)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&merged).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "layer,arch,cycles,macs_performed,macs_skipped,broadcasts,footprint_bits,utilization,speedup,verdict");
    assert_eq!(lines.len(), 1 + 3 + 3);
    assert_eq!(lines[5], format!("geomean,cnv,,,,,,,{},", 4.0f64 / 3.0));

    let out = run(&["compare", s(&json), s(&json)]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l == "geomean,cnv2,,,,,,,2,"));
    assert_eq!(stdout.lines().count(), 1 + 6 + 3);
}

#[test]
fn sparsity_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (k, pa) in ["0", "0.25", "0.5", "0.75"].iter().enumerate() {
        let json = dir.path().join(format!("r{k}.json"));
        let out = run(&[
            "run", "--dims", "12x12x64", "--filters", "8x2x2", "--pa", pa, "--seed", "3", "--arch", "baseline,cnv",
            "--name", pa, "--json", s(&json),
        ]);
        assert!(out.status.success());
        reports.push(json);
    }
    let merged = dir.path().join("m.csv");
    let mut args = vec!["compare".to_owned()];
    args.extend(reports.iter().map(|p| s(p).to_owned()));
    args.extend(["-o".into(), s(&merged).into()]);
    assert!(bin().args(&args).status().unwrap().success());
    let mut reader = csv::Reader::from_path(&merged).unwrap();
    let speedups: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[1] == "cnv" && &r[0] != "geomean")
        .map(|r| r[8].parse().unwrap())
        .collect();
    assert_eq!(speedups.len(), 4);
    assert_eq!(speedups[0], 1.0);
    assert!(speedups[3] > 1.0);
    assert!(speedups.windows(2).all(|w| w[0] <= w[1]), "{speedups:?}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "# defaults\nlanes = 8\nsync = window\narch = cnv\ndims=4x4x32\nfilters = 2x1x1\n").unwrap();
    let json = dir.path().join("r.json");
    let out = run(&["run", "--config", s(&cfg), "--json", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::load(&json).unwrap();
    let settings = report.settings.unwrap();
    assert_eq!((settings.lanes, settings.sync.as_str()), (8, "window"));
    assert_eq!(report.rows.len(), 1);

    let out = run(&["run", "--lanes", "4", "--config", s(&cfg), "--arch", "baseline,cnv2", "--json", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::load(&json).unwrap();
    assert_eq!(report.settings.unwrap().lanes, 4);
    assert_eq!(report.rows.iter().map(|r| r.arch.as_str()).collect::<Vec<_>>(), ["baseline", "cnv2"]);

    fs::write(&cfg, "lanes four\n").unwrap();
    assert_eq!(run(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn bad_inputs_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.layer");
    assert_eq!(run(&["run", "--layer", s(&missing)]).status.code(), Some(2));
    let empty = dir.path().join("empty.layer");
    fs::write(&empty, b"").unwrap();
    let out = run(&["run", "--layer", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
    // stride 2 does not tile a 6-wide input with 3-wide filters
    assert_eq!(run(&["run", "--dims", "6x6x16", "--filters", "1x3x3", "--stride", "2"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--arch", "tpu"]).status.code(), Some(2));
    assert_eq!(run(&["compare", s(&missing)]).status.code(), Some(1));
}

#[test]
fn thread_cap_env() {
    let ok = bin()
        .env("SPARSE_ACCEL_SIM_THREADS", "1")
        .args(["run", "--dims", "4x4x16", "--filters", "2x1x1"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = bin()
        .env("SPARSE_ACCEL_SIM_THREADS", "0")
        .args(["run", "--dims", "4x4x16", "--filters", "2x1x1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn threshold_criteria_pass_against_reference() {
    let out = run(&[
        "run", "--dims", "6x6x32", "--filters", "4x2x2", "--pa", "0.2", "--pw", "0.3", "--min", "-9", "--max", "9",
        "--act-crit", "abs:3", "--weight-crit", "pow2:2", "--lanes", "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn several_layers_in_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.layer");
    let b = dir.path().join("b.layer");
    assert!(run(&["gen", "--dims", "4x4x16", "--filters", "2x1x1", "-o", s(&a)]).status.success());
    assert!(run(&["gen", "--dims", "5x5x16", "--filters", "3x2x2", "--seed", "2", "-o", s(&b)]).status.success());
    let json = dir.path().join("r.json");
    let out = run(&["run", "--layer", s(&a), s(&b), "--lanes", "4", "--json", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::load(&json).unwrap();
    let layers: Vec<&str> = report.rows.iter().map(|r| r.layer.as_str()).collect();
    assert_eq!(layers, ["a", "a", "a", "b", "b", "b"]);
    let out = run(&["run", "--layer", s(&a), s(&b), "--trace", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
}
