use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qlink(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlink"))
        .args(args)
        .env("QLINK_OUT", out)
        .output()
        .expect("qlink runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn simulate(dir: &Path, preset: &str, mode: &str, events: &str) -> Output {
    qlink(&["simulate", "--preset", preset, "--mode", mode, "--events", events, "--seed", "4"], dir)
}

fn hash_of(dir: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    v["config_hash"].as_str().unwrap().to_string()
}

#[test]
fn simulate_embeds_the_config_hash_everywhere() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let o = simulate(&dir, "l6", "sampled-clicks", "30");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hash = hash_of(&dir);
    assert_eq!(hash.len(), 64);

    let events = fs::read_to_string(dir.join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 30);
    for line in events.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["config_hash"], hash.as_str());
    }
    let clicks = fs::read_to_string(dir.join("clicks.csv")).unwrap();
    assert_eq!(clicks.lines().next().unwrap(), format!("# config_hash={hash}"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], hash.as_str());

    let report_dir = tmp.path().join("report");
    let o = qlink(&["analyze", dir.to_str().unwrap(), "--out", report_dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"], hash.as_str());
    for csv in ["correlations.csv", "histogram.csv"] {
        let text = fs::read_to_string(report_dir.join(csv)).unwrap();
        assert!(text.lines().last().unwrap().starts_with(&format!("# config_hash,{hash}")), "{csv}");
    }

    // Same output again: report.json is protected.
    let o = qlink(&["analyze", dir.to_str().unwrap(), "--out", report_dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 4);
    let o = qlink(&["analyze", dir.to_str().unwrap(), "--out", report_dir.to_str().unwrap(), "--force"], tmp.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn analyze_rejects_mixed_hashes_without_force() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&simulate(&a, "l6", "density-matrix", "12")), 0);
    assert_eq!(code(&simulate(&b, "l11", "density-matrix", "12")), 0);
    assert_ne!(hash_of(&a), hash_of(&b));
    let out = tmp.path().join("mixed");
    let ea = a.join("events.jsonl");
    let eb = b.join("events.jsonl");
    let args = ["analyze", ea.to_str().unwrap(), eb.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = qlink(&args, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&qlink(&forced, tmp.path())), 0);
}

#[test]
fn default_output_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("env-out");
    let o = qlink(&["rates", "--row", "l6"], &dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.join("rates.csv")).unwrap();
    assert!(text.starts_with("preset,length_km"));
    assert!(text.lines().nth(1).unwrap().starts_with("l6,"));
}

#[test]
fn empty_estimator_list_writes_only_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&simulate(&run, "l6", "density-matrix", "6")), 0);
    let out = tmp.path().join("empty");
    let o = qlink(&["analyze", run.to_str().unwrap(), "--estimators", "", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["manifest.json".to_string()]);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(code(&qlink(&["simulate", "--preset", "l99", "--events", "1"], &out)), 2);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[links]\ndrift_rate = \"fast\"\n").unwrap();
    let o = qlink(&["simulate", "--scenario", bad.to_str().unwrap(), "--events", "1"], &out);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("drift_rate"));

    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "[bsm]\nwidget = 3\n").unwrap();
    assert_eq!(code(&qlink(&["simulate", "--scenario", unknown.to_str().unwrap(), "--events", "1"], &out)), 2);
}

#[test]
fn malformed_event_lines_report_their_line_number() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&simulate(&run, "l6", "density-matrix", "4")), 0);
    let path = run.join("events.jsonl");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[2] = "{not json".into();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = qlink(&["analyze", path.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn io_errors_exit_with_four() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&qlink(&["rates", "--scenario", missing.to_str().unwrap()], tmp.path())), 4);
    // Output path occupied by a regular file.
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&qlink(&["rates", "--row", "l6", "--out", blocker.to_str().unwrap()], tmp.path())), 4);
}

#[test]
fn impossible_calibration_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let targets = tmp.path().join("targets.toml");
    fs::write(
        &targets,
        r#"reference = "l6"
success_probability = 0.5
contrast = 0.955
accepted_fraction = 0.65
atom_photon_fidelity = [0.941, 0.911]
tolerance = 0.1

[[repetition_rates]]
preset = "l6"
rate = 30.8e3
"#,
    )
    .unwrap();
    let out = tmp.path().join("cal");
    let o = qlink(&["calibrate", "--targets", targets.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn presets_are_listed() {
    let tmp = TempDir::new().unwrap();
    let o = qlink(&["presets"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["l6", "l11", "l23", "l33"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name},"))), "{text}");
    }
}

#[test]
fn every_table_ends_with_the_hash() {
    let tmp = TempDir::new().unwrap();
    let runs: [(&[&str], &str); 3] = [
        (&["dephasing", "--duration", "10e-6", "--step", "1e-6", "--trajectories", "150"], "dephasing_node1.csv"),
        (&["scan", "--coincidences", "400", "--span", "10e-9"], "interference.csv"),
        (&["rates"], "rates.csv"),
    ];
    for (args, file) in runs {
        let out = tmp.path().join(file);
        let mut full = args.to_vec();
        full.extend(["--out", out.to_str().unwrap()]);
        let o = qlink(&full, tmp.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(out.join(file)).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("# config_hash,") && last.len() > 14 + 64, "{file}: {last}");
    }
}
