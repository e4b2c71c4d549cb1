use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use adaptive_pp_cli::{execute, parse_experiment, Cli, Status};
use clap::Parser;
use proptest::prelude::*;
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_adaptive-pp");

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/benchmark.json")
}

fn bundled_value() -> Value {
    serde_json::from_str(&fs::read_to_string(bundled()).unwrap()).unwrap()
}

/// The bundled experiment with a cheaper `ᾱ` estimate.
fn quick_value() -> Value {
    let mut v = bundled_value();
    v["audits"]["alpha_samples"] = json!(2000);
    v
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_in_process(args: &[&str]) -> Status {
    let cli = Cli::try_parse_from(std::iter::once("adaptive-pp").chain(args.iter().copied())).unwrap();
    execute(&cli, std::io::sink())
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn bundled_example_runs_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = Command::new(BIN)
        .args(["run", bundled().to_str().unwrap(), "--plots", "--quiet", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    let script = fs::read_to_string(out.join("plots.gp")).unwrap();
    assert!(script.contains("'trajectory.csv'"));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["files"], json!(["trajectory.csv", "plots.gp"]));
    assert!(m["audits"].as_array().unwrap().iter().all(|a| a["passed"] == true));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_mu_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["simulation"]["mu"] = json!(0.0);
    let cfg = write_config(tmp.path(), "bad.json", &v);
    let out = tmp.path().join("out");
    let output = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("μ"));
    assert_eq!(manifest(&out)["status"], "config_error");
}

#[test]
fn horizon_one_writes_one_record() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["simulation"]["horizon"] = json!(1);
    let cfg = write_config(tmp.path(), "h1.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Status::Ok);
    assert_eq!(fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count(), 2);
}

#[test]
fn schema_problems_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases: Vec<Value> = {
        let mut a = quick_value();
        a["schema_version"] = json!(2);
        let mut b = quick_value();
        b["simulation"]["unexpected"] = json!(true);
        let mut c = quick_value();
        c["audits"]["select"] = json!(["dissipation", "nonsense"]);
        let mut d = quick_value();
        d.as_object_mut().unwrap().remove("schema_version");
        let mut e = quick_value();
        e["output"]["trajectory"] = json!("../escape.csv");
        vec![a, b, c, d, e]
    };
    for (i, v) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), v);
        assert_eq!(
            run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
            Status::ConfigError,
            "case {i}"
        );
    }
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        run_in_process(&["run", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        Status::ConfigError
    );
}

#[test]
fn singular_estimate_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    // admit b̂ = 0 and start there
    v["simulation"]["uncertainty_set"]["hi"][3] = json!(0.0);
    v["simulation"]["theta0"] = json!([0.0, -1.0, 2.0, 0.0, 0.0]);
    let cfg = write_config(tmp.path(), "sing.json", &v);
    let out = tmp.path().join("out");
    let status = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap(), "--quiet", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert_eq!(manifest(&out)["status"], "singular_sylvester");
}

#[test]
fn audit_round_trip_reproduces_run_audits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", &quick_value());
    let out = tmp.path().join("run");
    assert_eq!(run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Status::Ok);
    let run_audits = manifest(&out)["audits"].clone();

    let aout = tmp.path().join("audit");
    let csv = out.join("trajectory.csv");
    assert_eq!(
        run_in_process(&["audit", csv.to_str().unwrap(), cfg.to_str().unwrap(), "--out", aout.to_str().unwrap()]),
        Status::Ok
    );
    assert_eq!(manifest(&aout)["audits"], run_audits);

    // the printed reports agree line for line
    let report = |args: &[&str]| {
        let o = Command::new(BIN).args(args).output().unwrap();
        String::from_utf8(o.stdout).unwrap()
    };
    let r1 = report(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let r2 = report(&["audit", csv.to_str().unwrap(), cfg.to_str().unwrap(), "--out", aout.to_str().unwrap()]);
    assert_eq!(r1, r2);
    assert!(r1.contains("state_recursion  PASS"));
}

#[test]
fn perturbed_regressor_fails_the_recursion_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", &quick_value());
    let out = tmp.path().join("run");
    assert_eq!(run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Status::Ok);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[500].split(',').map(String::from).collect();
    let psi1: f64 = fields[9].parse().unwrap();
    fields[9] = format!("{:.16e}", psi1 + 1e-3);
    lines[500] = fields.join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let aout = tmp.path().join("audit");
    let o = Command::new(BIN)
        .args(["audit", bad.to_str().unwrap(), cfg.to_str().unwrap(), "--out", aout.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("state_recursion  FAIL"));
}

#[test]
fn truncated_trajectory_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", &quick_value());
    let out = tmp.path().join("run");
    run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let aout = tmp.path().join("audit");
    for cut in [csv.len() / 2, csv.len() - 40, 10] {
        let bad = tmp.path().join("cut.csv");
        fs::write(&bad, &csv[..cut]).unwrap();
        assert_eq!(
            run_in_process(&["audit", bad.to_str().unwrap(), cfg.to_str().unwrap(), "--out", aout.to_str().unwrap()]),
            Status::ConfigError,
            "cut at {cut}"
        );
    }
    // a dimension mismatch between CSV and config
    let mut v = quick_value();
    v["simulation"]["horizon"] = json!(999);
    let cfg2 = write_config(tmp.path(), "q2.json", &v);
    let good = out.join("trajectory.csv");
    assert_eq!(
        run_in_process(&["audit", good.to_str().unwrap(), cfg2.to_str().unwrap(), "--out", aout.to_str().unwrap()]),
        Status::ConfigError
    );
}

#[test]
fn repeated_runs_and_sweeps_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["simulation"]["horizon"] = json!(300);
    let cfg = write_config(tmp.path(), "q.json", &v);
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    for d in ["a", "b"] {
        let out = tmp.path().join(d);
        run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        run_in_process(&["sweep", cfg.to_str().unwrap(), "--draws", "4", "--seed", "9", "--out", out.to_str().unwrap()]);
    }
    assert_eq!(read("a", "trajectory.csv"), read("b", "trajectory.csv"));
    assert_eq!(read("a", "sweep.csv"), read("b", "sweep.csv"));
    assert_eq!(read("a", "sweep.json"), read("b", "sweep.json"));
}

#[test]
fn thread_cap_does_not_change_sweep_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["simulation"]["horizon"] = json!(200);
    let cfg = write_config(tmp.path(), "q.json", &v);
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let status = Command::new(BIN)
            .env("ADAPTIVE_PP_THREADS", threads)
            .args(["sweep", cfg.to_str().unwrap(), "--draws", "5", "--seed", "1", "--quiet", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.code() == Some(0) || status.code() == Some(1));
        outs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn single_draw_without_randomization_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["sweep"] = json!({
        "randomize_plant": false,
        "randomize_theta0": false,
        "phi0_range": null,
        "mu_range": null
    });
    let cfg = write_config(tmp.path(), "q.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Status::Ok);
    let run_audits = manifest(&out)["audits"].clone();
    assert_eq!(
        run_in_process(&["sweep", cfg.to_str().unwrap(), "--draws", "1", "--out", out.to_str().unwrap()]),
        Status::Ok
    );
    let report: Value = serde_json::from_slice(&fs::read(out.join("sweep.json")).unwrap()).unwrap();
    let draw = &report["draws"][0];
    assert_eq!(draw["config"], v["simulation"]);
    let lines = draw["outcome"]["audits"]["lines"].as_array().unwrap();
    let from_sweep: Vec<Value> = lines
        .iter()
        .map(|l| json!({"name": l["name"], "passed": l["passed"]}))
        .collect();
    assert_eq!(Value::Array(from_sweep), run_audits);
}

#[test]
fn noise_free_sweep_passes_every_draw() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_value();
    v["sweep"] = json!({ "noise_free": true });
    let cfg = write_config(tmp.path(), "q.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(
        run_in_process(&["sweep", cfg.to_str().unwrap(), "--draws", "50", "--seed", "2", "--out", out.to_str().unwrap()]),
        Status::Ok
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",pass,")).count(), 50);
}

#[test]
fn zero_draws_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", &quick_value());
    let out = tmp.path().join("out");
    assert_eq!(
        run_in_process(&["sweep", cfg.to_str().unwrap(), "--draws", "0", "--out", out.to_str().unwrap()]),
        Status::ConfigError
    );
}

fn mutate(text: &str, kind: u8, pos: usize, junk: &str) -> String {
    let mut v: Value = serde_json::from_str(text).unwrap();
    match kind % 4 {
        // truncate before the closing brace
        0 => {
            let end = text.rfind('}').unwrap();
            let cut = pos % end;
            let mut cut = cut;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            text[..cut].to_string()
        }
        // inject an unknown key at a random object
        1 => {
            let paths: [&[&str]; 4] = [&[], &["simulation"], &["audits"], &["simulation", "theta_true"]];
            let mut obj = &mut v;
            for k in paths[pos % 4] {
                obj = obj.get_mut(*k).unwrap();
            }
            obj.as_object_mut().unwrap().insert(format!("x_{junk}"), json!(1));
            v.to_string()
        }
        // a numeric field becomes a string
        2 => {
            let fields = ["n", "mu", "horizon", "t0", "seed"];
            v["simulation"][fields[pos % fields.len()]] = json!(junk);
            v.to_string()
        }
        // an unmatched brace spliced in after a separator (the bundled file
        // has no `,` or `:` inside strings)
        _ => {
            let seps: Vec<usize> = text.match_indices([',', ':']).map(|(i, _)| i + 1).collect();
            let cut = seps[pos % seps.len()];
            format!("{}{{{junk}{}", &text[..cut], &text[cut..])
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn malformed_configs_always_exit_two(kind in 0u8..4, pos in 0usize..10_000, junk in "[a-z#@:]{0,8}") {
        let text = fs::read_to_string(bundled()).unwrap();
        let bad = mutate(&text, kind, pos, &junk);
        prop_assert!(parse_experiment(&bad, Path::new("fuzz.json")).is_err());
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tmp.path().join("fuzz.json");
        fs::write(&cfg, &bad).unwrap();
        let out = tmp.path().join("out");
        let status = run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        prop_assert_eq!(status, Status::ConfigError);
        let m = manifest(&out);
        prop_assert!(m["error"].as_str().is_some_and(|e| !e.is_empty()));
    }
}
