//! End-to-end tests of the `neqsig` binary: pipelines, exit codes,
//! machine-readable errors, output resolution, and schema validity of
//! the emitted JSON reports.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neqsig"));
    // keep the environment override out of tests that don't set it
    c.env_remove(neqsig_cli::OUT_DIR_ENV);
    c
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Failure path: asserts the exit code and returns the parsed error JSON
/// from stderr.
fn assert_failure(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let err: Value = serde_json::from_str(stderr.trim()).unwrap_or_else(|_| {
        panic!("stderr is not an error JSON record: {stderr}");
    });
    assert_eq!(err["exit_code"], code, "error record: {err}");
    assert!(err["error"].is_string());
    err
}

/// Validates `instance` against a shipped report schema; the additivity
/// schema cross-references the analyze schema, so both are registered.
fn assert_schema_valid(schema_name: &str, instance: &Value) {
    let analyze = schema("analyze_report.schema.json");
    let target = schema(schema_name);
    let registry = jsonschema::Registry::new()
        .add(
            "https://example.invalid/neqsig/analyze_report.schema.json",
            jsonschema::Resource::from_contents(analyze),
        )
        .unwrap()
        .prepare()
        .unwrap();
    let validator = jsonschema::options().with_registry(&registry).build(&target).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn predict_matches_the_equilibrium_sinusoid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("predict.csv");
    let r = run(bin()
        .args(["predict", "--config"])
        .arg(repo_config("equilibrium.toml"))
        .arg("--out")
        .arg(&out));
    assert_success(&r);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let [theta, p_eq, p_cfg] = fields[..] else { panic!("bad row: {line}") };
        let want = 0.5 * (1.0 + 0.8 * (2.0 * theta).cos());
        assert!((p_eq - want).abs() <= 1e-12);
        // the configured density is equilibrium here, so both curves agree
        assert_eq!(p_eq, p_cfg);
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn simulate_then_analyze_detects_the_delta_signature() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    let report_path = dir.path().join("report.json");
    let cfg = repo_config("delta.toml");

    let r = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&events));
    assert_success(&r);
    let text = std::fs::read_to_string(&events).unwrap();
    assert_eq!(text.lines().next(), Some("index,theta,outcome"));
    assert_eq!(text.lines().count(), 10_001); // header + one row per photon

    let r = run(bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--events")
        .arg(&events)
        .arg("--out")
        .arg(&report_path));
    assert_success(&r);

    let report = read_json(&report_path);
    assert_schema_valid("analyze_report.schema.json", &report);
    assert_eq!(report["verdict"], "nonequilibrium signature detected");
    assert_eq!(report["harmonic_excess"]["reject"], true);
    assert!(report["harmonic_excess"]["p_value"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["event_count"], 10_000);
    // the report embeds the resolved configuration
    assert_eq!(report["config"]["density"]["kind"], "delta");
    assert_eq!(report["config"]["density"]["u0"], 0.3);
    assert_eq!(report["config"]["protocol"]["photons"], 10_000);
    assert_eq!(report["config"]["analysis"]["k_alt"], 3); // default filled in
}

#[test]
fn analyze_reads_events_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    let from_file = dir.path().join("file.json");
    let from_stdin = dir.path().join("stdin.json");
    let cfg = repo_config("delta.toml");

    assert_success(&run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&events)));
    assert_success(&run(
        bin().args(["analyze", "--config"]).arg(&cfg).arg("--events").arg(&events).arg("--out").arg(&from_file),
    ));

    let mut child = bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .args(["--events", "-"])
        .arg("--out")
        .arg(&from_stdin)
        .stdin(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    std::io::copy(
        &mut std::fs::File::open(&events).unwrap(),
        &mut child.stdin.take().unwrap(),
    )
    .unwrap();
    let status = child.wait().unwrap();
    assert!(status.success());

    assert_eq!(std::fs::read(&from_file).unwrap(), std::fs::read(&from_stdin).unwrap());
}

#[test]
fn equilibrium_analysis_is_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "seed = 3\n[protocol]\nmode = \"random-reset\"\nangles = 12\nphotons = 200000\n",
    )
    .unwrap();
    let events = dir.path().join("events.csv");
    let report_path = dir.path().join("report.json");

    assert_success(&run(
        bin().args(["simulate", "--config"]).arg(&cfg_path).arg("--out").arg(&events),
    ));
    assert_success(&run(
        bin().args(["analyze", "--config"]).arg(&cfg_path).arg("--events").arg(&events).arg("--out").arg(&report_path),
    ));

    let report = read_json(&report_path);
    assert_schema_valid("analyze_report.schema.json", &report);
    assert_eq!(report["verdict"], "consistent with quantum");
    let amp = report["fit"]["amplitude1"].as_f64().unwrap();
    assert!((amp - 0.8).abs() < 0.02, "amplitude {amp}");
}

#[test]
fn additivity_report_is_schema_valid_and_consistent_in_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("additivity.json");
    let r = run(bin()
        .args(["additivity", "--config"])
        .arg(repo_config("equilibrium.toml"))
        .arg("--out")
        .arg(&out));
    assert_success(&r);
    let report = read_json(&out);
    assert_schema_valid("additivity_report.schema.json", &report);
    assert_eq!(report["verdict"], "consistent with expectation additivity");
    assert!(report["exact_delta"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(report["outcome"]["report"]["reject"], false);
}

#[test]
fn jsonl_output_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    let report_path = dir.path().join("report.json");
    let cfg = repo_config("delta.toml");

    assert_success(&run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&events)));
    let text = std::fs::read_to_string(&events).unwrap();
    assert!(text.starts_with('{'), "expected JSONL, got: {}", &text[..40.min(text.len())]);
    serde_json::from_str::<Value>(text.lines().next().unwrap()).unwrap();

    assert_success(&run(
        bin().args(["analyze", "--config"]).arg(&cfg).arg("--events").arg(&events).arg("--out").arg(&report_path),
    ));
    assert_eq!(read_json(&report_path)["event_count"], 10_000);
}

#[test]
fn missing_config_exits_2() {
    let r = run(bin().args(["predict", "--config", "/nonexistent/cfg.toml", "--out", "/dev/null"]));
    let err = assert_failure(&r, 2);
    assert_eq!(err["kind"], "config");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[protocol]\nphotonns = 10\n").unwrap();
    let r = run(bin().args(["simulate", "--config"]).arg(&cfg).args(["--out", "/dev/null"]));
    let err = assert_failure(&r, 2);
    assert_eq!(err["kind"], "config");
}

#[test]
fn invalid_physics_in_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[model]\np_target = 1.5\n").unwrap();
    let r = run(bin().args(["predict", "--config"]).arg(&cfg).args(["--out", "/dev/null"]));
    assert_eq!(assert_failure(&r, 2)["kind"], "config");
}

#[test]
fn missing_events_file_exits_3() {
    let r = run(bin().args(["analyze", "--events", "/nonexistent/events.csv", "--out", "/dev/null"]));
    let err = assert_failure(&r, 3);
    assert_eq!(err["kind"], "data");
}

#[test]
fn empty_events_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    std::fs::write(&events, "").unwrap();
    let r = run(bin().args(["analyze", "--events"]).arg(&events).args(["--out", "/dev/null"]));
    assert_eq!(assert_failure(&r, 3)["kind"], "data");
}

#[test]
fn malformed_events_line_is_reported_with_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    std::fs::write(
        &events,
        "index,theta,outcome\n0,0.5,1\n1,not-a-number,1\n",
    )
    .unwrap();
    let r = run(bin().args(["analyze", "--events"]).arg(&events).args(["--out", "/dev/null"]));
    let err = assert_failure(&r, 3);
    assert_eq!(err["kind"], "data");
    assert!(err["error"].as_str().unwrap().contains("line 3"), "error: {}", err["error"]);
}

#[test]
fn degenerate_analysis_setup_exits_4() {
    // k_alt = 1 makes the nested harmonic comparison ill-posed: the
    // alternative does not extend the null, a numeric failure (exit 4)
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[analysis]\nk_alt = 1\n[protocol]\nphotons = 1000\n").unwrap();
    let events = dir.path().join("events.csv");
    assert_success(&run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&events)));
    let r = run(bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--events")
        .arg(&events)
        .args(["--out", "/dev/null"]));
    let err = assert_failure(&r, 4);
    assert_eq!(err["kind"], "numeric");
}

#[test]
fn degenerate_relaxation_grid_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[relaxation]\nmodes = 3\ntrajectories = 2000\ncells = 4\nt_end = 0.1\ncheckpoints = 1\ntol = 1e-4\n",
    )
    .unwrap();
    let out = dir.path().join("relax.csv");
    let r = run(bin().args(["relax", "--config"]).arg(&cfg).arg("--out").arg(&out));
    let err = assert_failure(&r, 4);
    assert_eq!(err["kind"], "numeric");
}

#[test]
fn env_var_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("delta.toml");
    let r = run(bin()
        .env(neqsig_cli::OUT_DIR_ENV, dir.path())
        .args(["simulate", "--config"])
        .arg(&cfg));
    assert_success(&r);
    assert!(dir.path().join("events.csv").is_file());
}

#[test]
fn out_flag_beats_the_env_directory() {
    let env_dir = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = out_dir.path().join("explicit.csv");
    let r = run(bin()
        .env(neqsig_cli::OUT_DIR_ENV, env_dir.path())
        .args(["simulate", "--config"])
        .arg(repo_config("delta.toml"))
        .arg("--out")
        .arg(&out));
    assert_success(&r);
    assert!(out.is_file());
    assert!(!env_dir.path().join("events.csv").exists());
}

#[test]
fn cli_seed_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("delta.toml"); // seed = 1 inside
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    assert_success(&run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&a)));
    assert_success(&run(
        bin().args(["simulate", "--config"]).arg(&cfg).args(["--seed", "1"]).arg("--out").arg(&b),
    ));
    assert_success(&run(
        bin().args(["simulate", "--config"]).arg(&cfg).args(["--seed", "2"]).arg("--out").arg(&c),
    ));
    let (a, b, c) = (
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        std::fs::read(&c).unwrap(),
    );
    assert_eq!(a, b, "explicit --seed equal to the config seed must not change output");
    assert_ne!(a, c, "a different seed must change the event stream");
}

#[test]
fn relax_writes_series_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "seed = 5\n[relaxation]\nmodes = 3\ntrajectories = 4000\ncells = 8\nt_end = 0.2\ncheckpoints = 2\ntol = 1e-4\n",
    )
    .unwrap();
    let out = dir.path().join("relax.csv");
    assert_success(&run(bin().args(["relax", "--config"]).arg(&cfg_path).arg("--out").arg(&out)));

    let series = std::fs::read_to_string(&out).unwrap();
    let mut lines = series.lines();
    assert!(lines.next().unwrap().starts_with("# neqsig "));
    assert_eq!(lines.next(), Some("t,h_coarse"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3); // t = 0 plus two checkpoints
    assert_eq!(rows[0][0], 0.0);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[1] >= 0.0));

    let hist = std::fs::read_to_string(dir.path().join("relax_hist.csv")).unwrap();
    let counts: u64 = hist
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(3).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(counts, 4000);
}
