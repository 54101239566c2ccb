use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qlink::analysis::{
    acceptance_filter, chsh_from_dataset, contrast_with_error, fringe_fit, pair_clicks, pool_outcomes, sbr,
    three_basis_analysis, binomial_stderr, correlation_probability, CorrelationDataset, DetectionHistogram, TimeWindow,
};
use qlink::channel::{classify_coincidence, read_clicks_csv, write_clicks_csv, CoincidenceClass};
use qlink::config::{self, ConfigError};
use qlink::dephasing::{coherence_envelope, default_time_step, simulate_channel_family, Basis, DephasingConfig};
use qlink::protocol::{
    self, calibrate, datasets_from_events, fidelity_vs_length, interference_scan, rate_budget, read_events_jsonl,
    run_sequence_with, write_event_line, CalibrationTargets, EventRecord, HeraldModel, ProtocolError, RunMode,
    RunTarget, Scenario,
};

const OUT_ENV: &str = "QLINK_OUT";
const DEFAULT_OUT: &str = "qlink-out";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Calibration(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "qlink", version, about = "Two-node atom-photon quantum network link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario TOML overlaid on the built-in defaults.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Fibre preset (l6, l11, l23, l33) applied on top of the scenario.
    #[arg(long)]
    preset: Option<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, CliError> {
        let base = match &self.scenario {
            Some(p) => config::load_scenario(p)?,
            None => config::default_scenario(),
        };
        Ok(match &self.preset {
            Some(name) => config::apply_preset(&base, name)?,
            None => base,
        })
    }

    fn label(&self) -> String {
        match (&self.scenario, &self.preset) {
            (Some(p), Some(n)) => format!("{}+{n}", p.display()),
            (Some(p), None) => p.display().to_string(),
            (None, Some(n)) => n.clone(),
            (None, None) => "defaults".into(),
        }
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory; defaults to $QLINK_OUT or ./qlink-out.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
    /// Overwrite existing outputs and accept mixed config hashes.
    #[arg(long)]
    force: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    DensityMatrix,
    SampledClicks,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DensityMatrix => RunMode::DensityMatrix,
            ModeArg::SampledClicks => RunMode::SampledClicks,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the try sequence and write events, clicks, summary and manifest.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "density-matrix")]
        mode: ModeArg,
        /// Stop after this many heralded events.
        #[arg(long)]
        events: Option<usize>,
        /// Stop after this much simulated wall time, in s.
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Estimate contrasts, fidelities, CHSH, fringes and SBR from event and click files.
    Analyze {
        /// Event JSONL files, click CSV files or simulate output directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated: three-basis, chsh, fringe, coincidences, sbr, or all. Empty for a manifest only.
        #[arg(long, default_value = "all")]
        estimators: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Memory coherence curves and envelope of one node.
    Dephasing {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        node: usize,
        /// Last storage time, in s.
        #[arg(long, default_value_t = 600e-6)]
        duration: f64,
        /// Grid spacing, in s.
        #[arg(long, default_value_t = 0.5e-6)]
        step: f64,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Rate budget per preset.
    Rates {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Presets to tabulate; all four when omitted.
        #[arg(long = "row", value_delimiter = ',')]
        rows: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit free parameters to target observables and write a parameter file.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Targets TOML; the built-in targets when omitted.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Model fidelity for every preset plus the delay-only variant.
    FidelityTable {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Two-photon interference contrast versus arrival offset.
    Scan {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Largest |offset|, in s.
        #[arg(long, default_value_t = 150e-9)]
        span: f64,
        #[arg(long, default_value_t = 10e-9)]
        step: f64,
        #[arg(long, default_value_t = 40_000)]
        coincidences: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// List the fibre presets.
    Presets,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    scenario: String,
    scenario_name: String,
    seed: Option<u64>,
    mode: Option<RunMode>,
    events: Option<usize>,
    duration: Option<f64>,
    output_dir: String,
    tool_version: &'static str,
    config_hash: Option<String>,
    outputs: Vec<String>,
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(e.to_string()))?;
    f.write_all(b"\n").map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Io(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn cmd_simulate(
    sargs: &ScenarioArgs,
    seed: u64,
    mode: RunMode,
    events: Option<usize>,
    duration: Option<f64>,
    out: &OutArgs,
) -> Result<(), CliError> {
    let s = sargs.load()?;
    let hash = config::config_hash(&s);
    let target = match (events, duration) {
        (None, None) => RunTarget::events(100),
        (e, d) => RunTarget { events: e, duration: d },
    };
    prepare_dir(&out.out)?;
    let events_path = out.out.join("events.jsonl");
    let clicks_path = out.out.join("clicks.csv");
    let mut ev = create(&events_path)?;
    let mut clicks = Vec::new();
    let model = HeraldModel::new(&s)?;
    let summary = run_sequence_with(&s, mode, target, seed, &model, |e, rows| {
        clicks.extend_from_slice(rows);
        if let Some(e) = e {
            write_event_line(&mut ev, &hash, e)?;
        }
        Ok(())
    })?;
    ev.flush().map_err(io_err(&events_path))?;
    let mut outputs = vec!["events.jsonl".to_string(), "summary.json".to_string()];
    if mode == RunMode::SampledClicks {
        let mut w = create(&clicks_path)?;
        writeln!(w, "# config_hash={hash}").map_err(io_err(&clicks_path))?;
        write_clicks_csv(&clicks, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
        outputs.push("clicks.csv".into());
    }
    #[derive(Serialize)]
    struct SummaryFile<'a> {
        config_hash: &'a str,
        #[serde(flatten)]
        summary: &'a protocol::RunSummary,
    }
    write_json(&out.out.join("summary.json"), &SummaryFile { config_hash: &hash, summary: &summary })?;
    outputs.push("manifest.json".into());
    write_json(
        &out.out.join("manifest.json"),
        &RunManifest {
            command: "simulate",
            scenario: sargs.label(),
            scenario_name: s.name.clone(),
            seed: Some(seed),
            mode: Some(mode),
            events: target.events,
            duration: target.duration,
            output_dir: out.out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: Some(hash.clone()),
            outputs,
        },
    )?;
    eprintln!(
        "{} events in {:.1} s simulated ({:.4} /s); written to {}",
        summary.events,
        summary.wall_time,
        summary.observed_event_rate,
        out.out.display()
    );
    Ok(())
}

struct Inputs {
    events: Vec<EventRecord>,
    clicks: Vec<qlink::channel::ClickRecord>,
    hashes: BTreeSet<String>,
    files: Vec<String>,
}

fn click_file_hash(path: &Path) -> Result<Option<String>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().next().and_then(|l| l.strip_prefix("# config_hash=")).map(|h| h.trim().to_string()))
}

fn collect_inputs(paths: &[PathBuf]) -> Result<Inputs, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            for name in ["events.jsonl", "clicks.csv"] {
                let f = p.join(name);
                if f.exists() {
                    files.push(f);
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    let mut inputs = Inputs { events: Vec::new(), clicks: Vec::new(), hashes: BTreeSet::new(), files: Vec::new() };
    for f in files {
        let is_csv = f.extension().is_some_and(|e| e == "csv");
        let file = File::open(&f).map_err(io_err(&f))?;
        if is_csv {
            if let Some(h) = click_file_hash(&f)? {
                inputs.hashes.insert(h);
            }
            let rows = read_clicks_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
            inputs.clicks.extend(rows);
        } else {
            let recs = read_events_jsonl(BufReader::new(file)).map_err(|e| match e {
                ProtocolError::Io(e) => CliError::Io(format!("{}: {e}", f.display())),
                other => CliError::Config(format!("{}: {other}", f.display())),
            })?;
            for r in &recs {
                inputs.hashes.insert(r.config_hash.clone());
            }
            inputs.events.extend(recs);
        }
        inputs.files.push(f.display().to_string());
    }
    Ok(inputs)
}

const ESTIMATORS: [&str; 5] = ["three-basis", "chsh", "fringe", "coincidences", "sbr"];

fn parse_estimators(list: &str) -> Result<BTreeSet<&'static str>, CliError> {
    let mut out = BTreeSet::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend(ESTIMATORS);
            continue;
        }
        let known = ESTIMATORS
            .iter()
            .find(|&&e| e == item)
            .ok_or_else(|| CliError::Config(format!("unknown estimator {item:?}; known: {}", ESTIMATORS.join(", "))))?;
        out.insert(*known);
    }
    Ok(out)
}

#[derive(Serialize, Default)]
struct AnalysisReport {
    config_hash: Option<String>,
    inputs: Vec<String>,
    events: usize,
    psi_plus_events: usize,
    psi_minus_events: usize,
    /// Fidelity bound of the pooled three-basis data.
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    three_basis: Option<StateResults<qlink::analysis::ThreeBasisResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<StateResults<qlink::analysis::ChshEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fringe: Option<Vec<FringeRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coincidences: Option<CoincidenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sbr: Option<SbrReport>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct StateResults<T> {
    psi_minus: Option<T>,
    psi_plus: Option<T>,
    pooled: Option<T>,
}

#[derive(Serialize)]
struct FringeRow {
    state: &'static str,
    node2_deg: f64,
    fit: qlink::analysis::FringeFit,
}

#[derive(Serialize)]
struct CoincidenceReport {
    recorded: usize,
    accepted: usize,
    accepted_fraction: f64,
    n_null: usize,
    n_plus: usize,
    n_minus: usize,
    contrast: Option<f64>,
    contrast_error: Option<f64>,
}

#[derive(Serialize)]
struct SbrReport {
    window_start: f64,
    window_width: f64,
    /// Two equal single-click ratios r combine to r/2 for coincidences.
    coincidence: Option<f64>,
    single_clicks: qlink::analysis::SbrEstimate,
}

fn per_state<T, F>(plus: &CorrelationDataset, minus: &CorrelationDataset, notes: &mut Vec<String>, name: &str, f: F) -> StateResults<T>
where
    F: Fn(&CorrelationDataset) -> Result<T, qlink::analysis::AnalysisError>,
{
    let mut run = |label: &str, d: &CorrelationDataset| match f(d) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{name} ({label}): {e}"));
            None
        }
    };
    let pooled = pool_outcomes(minus, plus);
    StateResults { psi_minus: run("psi_minus", minus), psi_plus: run("psi_plus", plus), pooled: run("pooled", &pooled) }
}

fn write_correlations_csv(path: &Path, sets: &[(&str, &CorrelationDataset)], hash: &str) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["state", "node1_deg", "node2_deg", "plane", "n_up_up", "n_up_down", "n_down_up", "n_down_down", "p_corr", "p_corr_error"])
        .map_err(csv_err)?;
    for (label, data) in sets {
        for e in data.entries() {
            let c = &e.counts;
            let (p, err) = match correlation_probability(c) {
                Ok((p, _)) => (format!("{p:.6}"), format!("{:.6}", binomial_stderr(p, c.total()))),
                Err(_) => (String::new(), String::new()),
            };
            w.write_record([
                label.to_string(),
                format!("{:.4}", e.setting.node1.angle_deg()),
                format!("{:.4}", e.setting.node2.angle_deg()),
                format!("{:?}", e.setting.node1.plane).to_lowercase(),
                format!("{}", c.up_up),
                format!("{}", c.up_down),
                format!("{}", c.down_up),
                format!("{}", c.down_down),
                p,
                err,
            ])
            .map_err(csv_err)?;
        }
    }
    let mut trailer = vec![String::new(); 10];
    trailer[0] = "# config_hash".into();
    trailer[1] = hash.into();
    w.write_record(&trailer).map_err(csv_err)?;
    w.flush().map_err(io_err(path))
}

fn fringe_rows(label: &'static str, data: &CorrelationDataset, notes: &mut Vec<String>) -> Vec<FringeRow> {
    let mut groups: Vec<(f64, Vec<(f64, f64, f64)>)> = Vec::new();
    for e in data.entries() {
        let Ok((p, _)) = correlation_probability(&e.counts) else { continue };
        let sigma = binomial_stderr(p, e.counts.total()).max(1e-3);
        let beta = (e.setting.node2.angle_deg() * 1e6).round() / 1e6;
        match groups.iter_mut().find(|(b, _)| *b == beta) {
            Some((_, v)) => v.push((e.setting.node1.angle_deg(), p, sigma)),
            None => groups.push((beta, vec![(e.setting.node1.angle_deg(), p, sigma)])),
        }
    }
    let mut out = Vec::new();
    for (beta, pts) in groups {
        let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let s: Vec<f64> = pts.iter().map(|p| p.2).collect();
        match fringe_fit(&a, &v, &s) {
            Ok(fit) => out.push(FringeRow { state: label, node2_deg: beta, fit }),
            Err(e) => notes.push(format!("fringe ({label}, node2 {beta}°): {e}")),
        }
    }
    out
}

fn cmd_analyze(paths: &[PathBuf], estimators: &str, out: &OutArgs) -> Result<(), CliError> {
    let wanted = parse_estimators(estimators)?;
    let inputs = collect_inputs(paths)?;
    if inputs.hashes.len() > 1 && !out.force {
        return Err(CliError::Config(format!(
            "inputs carry {} different config hashes ({}); pass --force to combine them",
            inputs.hashes.len(),
            inputs.hashes.iter().map(String::as_str).collect::<Vec<_>>().join(", ")
        )));
    }
    prepare_dir(&out.out)?;
    let report_path = out.out.join("report.json");
    refuse_overwrite(&report_path, out.force)?;
    let hash = (inputs.hashes.len() == 1).then(|| inputs.hashes.iter().next().cloned()).flatten();
    // Forced mixes list every hash in the CSV trailers.
    let hash_label = inputs.hashes.iter().map(String::as_str).collect::<Vec<_>>().join(";");
    let mut outputs = vec!["manifest.json".to_string()];

    if !wanted.is_empty() {
        let events: Vec<_> = inputs.events.iter().map(|r| r.event.clone()).collect();
        let (plus, minus) = datasets_from_events(&events);
        let mut report = AnalysisReport {
            config_hash: hash.clone(),
            inputs: inputs.files.clone(),
            events: events.len(),
            psi_plus_events: events.iter().filter(|e| e.outcome == qlink::quantum::BellOutcome::PsiPlus).count(),
            psi_minus_events: events.iter().filter(|e| e.outcome == qlink::quantum::BellOutcome::PsiMinus).count(),
            ..Default::default()
        };
        let mut notes = Vec::new();
        if wanted.contains("three-basis") {
            let r = per_state(&plus, &minus, &mut notes, "three-basis", three_basis_analysis);
            report.fidelity = r.pooled.map(|p| p.fidelity);
            report.fidelity_error = r.pooled.map(|p| p.fidelity_error);
            report.three_basis = Some(r);
        }
        if wanted.contains("chsh") {
            report.chsh = Some(per_state(&plus, &minus, &mut notes, "chsh", chsh_from_dataset));
        }
        if wanted.contains("fringe") {
            let mut rows = fringe_rows("psi_minus", &minus, &mut notes);
            rows.extend(fringe_rows("psi_plus", &plus, &mut notes));
            report.fringe = Some(rows);
        }
        if (wanted.contains("coincidences") || wanted.contains("sbr")) && inputs.clicks.is_empty() {
            notes.push("no click files given; coincidence and SBR estimators skipped".into());
        } else if !inputs.clicks.is_empty() {
            let window = protocol::acceptance_window(&config::default_scenario());
            // Click files carry no window of their own; use the default scenario's.
            let pairs = pair_clicks(&inputs.clicks).map_err(|e| CliError::Config(e.to_string()))?;
            if wanted.contains("coincidences") {
                let filtered = acceptance_filter(&pairs, window.width, window.start).map_err(|e| CliError::Config(e.to_string()))?;
                let mut n = [0usize; 4];
                for c in &filtered.accepted {
                    n[classify_coincidence(&c[0], &c[1]) as usize] += 1;
                }
                let heralds = |cs: &[qlink::analysis::Coincidence]| {
                    cs.iter().filter(|c| classify_coincidence(&c[0], &c[1]).heralded().is_some()).count()
                };
                let recorded = heralds(&pairs);
                let accepted = heralds(&filtered.accepted);
                let ce = contrast_with_error(
                    n[CoincidenceClass::DNull as usize] as f64,
                    n[CoincidenceClass::DPlus as usize] as f64,
                    n[CoincidenceClass::DMinus as usize] as f64,
                )
                .ok();
                report.coincidences = Some(CoincidenceReport {
                    recorded,
                    accepted,
                    accepted_fraction: if recorded > 0 { accepted as f64 / recorded as f64 } else { 0.0 },
                    n_null: n[CoincidenceClass::DNull as usize],
                    n_plus: n[CoincidenceClass::DPlus as usize],
                    n_minus: n[CoincidenceClass::DMinus as usize],
                    contrast: ce.map(|c| c.0),
                    contrast_error: ce.map(|c| c.1),
                });
            }
            if wanted.contains("sbr") {
                let (hist_start, width) = (-40e-9, 1e-9);
                let hist = DetectionHistogram::from_clicks(&inputs.clicks, hist_start, width, 260)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let sidebands = [TimeWindow::new(120e-9, 60e-9)];
                match sbr(&hist, &window, &sidebands) {
                    Ok(single) => {
                        let coincidence = single.ratio.map(|r| r / 2.0);
                        notes.push("sbr: click files hold only coincidence clicks, which over-weights background relative to free-running detection".into());
                        report.sbr = Some(SbrReport { window_start: window.start, window_width: window.width, coincidence, single_clicks: single });
                    }
                    Err(e) => notes.push(format!("sbr: {e}")),
                }
                let mut w = csv::Writer::from_writer(create(&out.out.join("histogram.csv"))?);
                w.write_record(["bin_centre_ns", "H1", "V1", "H2", "V2"]).map_err(csv_err)?;
                for i in 0..hist.bins() {
                    let mut rec = vec![format!("{:.3}", hist.bin_centre(i) * 1e9)];
                    rec.extend(hist.counts.iter().map(|c| format!("{}", c[i])));
                    w.write_record(rec).map_err(csv_err)?;
                }
                w.write_record(["# config_hash", &hash_label, "", "", ""]).map_err(csv_err)?;
                w.flush().map_err(|e| CliError::Io(e.to_string()))?;
                outputs.push("histogram.csv".into());
            }
        }
        report.notes = notes;
        write_correlations_csv(&out.out.join("correlations.csv"), &[("psi_minus", &minus), ("psi_plus", &plus)], &hash_label)?;
        outputs.push("correlations.csv".into());
        write_json(&report_path, &report)?;
        outputs.push("report.json".into());
        if let Some(f) = report.fidelity {
            eprintln!("pooled fidelity bound {f:.4} from {} events", report.events);
        }
    }
    write_json(
        &out.out.join("manifest.json"),
        &RunManifest {
            command: "analyze",
            scenario: inputs.files.join(","),
            scenario_name: String::new(),
            seed: None,
            mode: None,
            events: Some(inputs.events.len()),
            duration: None,
            output_dir: out.out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: hash,
            outputs,
        },
    )
}

fn cmd_dephasing(
    sargs: &ScenarioArgs,
    node: usize,
    duration: f64,
    step: f64,
    trajectories: usize,
    seed: u64,
    out: &OutArgs,
) -> Result<(), CliError> {
    if !(1..=2).contains(&node) {
        return Err(CliError::Config(format!("--node must be 1 or 2, got {node}")));
    }
    if !(step > 0.0 && duration >= 0.0) {
        return Err(CliError::Config("--step must be positive and --duration non-negative".into()));
    }
    let s = sargs.load()?;
    let n = s.nodes.get(node - 1);
    let cfg = DephasingConfig {
        trap: n.trap,
        field: n.field,
        temperature: n.temperature,
        n_trajectories: trajectories,
        time_step: default_time_step(&n.trap),
        seed,
    };
    let count = (duration / step).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|i| i as f64 * step).collect();
    let family = simulate_channel_family(&cfg, &times).map_err(|e| CliError::Config(e.to_string()))?;
    let env = coherence_envelope(&family, &Basis::ALL).map_err(|e| CliError::Config(e.to_string()))?;
    prepare_dir(&out.out)?;
    let path = out.out.join(format!("dephasing_node{node}.csv"));
    let mut file = create(&path)?;
    env.write_csv(&mut file).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(file, "# config_hash,{},,", config::config_hash(&s)).map_err(io_err(&path))?;
    file.flush().map_err(io_err(&path))?;
    let period = n.trap_oscillation_period;
    #[derive(Serialize)]
    struct Summary {
        config_hash: String,
        node: usize,
        trajectories_used: usize,
        trajectories_escaped: usize,
        one_over_e_time: Option<f64>,
        principal_frequency: Option<f64>,
        rephasing_frequency: Option<f64>,
    }
    let summary = Summary {
        config_hash: config::config_hash(&s),
        node,
        trajectories_used: family.trajectories_used,
        trajectories_escaped: family.trajectories_escaped,
        one_over_e_time: env.one_over_e_time(period),
        principal_frequency: env.principal_frequency(Basis::X, 20e3, 500e3),
        rephasing_frequency: env.rephasing_frequency(2.0 * period, 20e3, 200e3),
    };
    write_json(&out.out.join(format!("dephasing_node{node}.json")), &summary)?;
    eprintln!(
        "node {node}: 1/e time {:?} s, principal {:?} Hz, rephasing {:?} Hz",
        summary.one_over_e_time, summary.principal_frequency, summary.rephasing_frequency
    );
    Ok(())
}

fn cmd_rates(sargs: &ScenarioArgs, rows: &[String], out: &OutArgs) -> Result<(), CliError> {
    let base = sargs.load()?;
    let names: Vec<String> =
        if rows.is_empty() { config::preset_names().iter().map(|s| s.to_string()).collect() } else { rows.to_vec() };
    prepare_dir(&out.out)?;
    let path = out.out.join("rates.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "preset",
        "length_km",
        "repetition_rate_hz",
        "success_probability",
        "duty_cycle",
        "event_rate_per_s",
        "node_sbr1",
        "node_sbr2",
        "coincidence_sbr",
        "accepted_fraction",
    ])
    .map_err(csv_err)?;
    for name in &names {
        let s = config::apply_preset(&base, name)?;
        let duty = s.sequence.duty_cycle.unwrap_or_else(|| {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            protocol::simulate_duty_cycle(&s.sequence, 20_000.0, &mut rng).duty_cycle
        });
        let b = rate_budget(&s, duty);
        let sbr = protocol::sbr_model(&s);
        w.write_record([
            name.clone(),
            format!("{}", config::preset_row(name)?.total_length_km),
            format!("{:.1}", b.repetition_rate),
            format!("{:.4e}", b.success_probability),
            format!("{:.3}", b.duty_cycle),
            format!("{:.5e}", b.event_rate),
            format!("{:.1}", sbr.node1),
            format!("{:.1}", sbr.node2),
            format!("{:.1}", sbr.coincidence),
            format!("{:.3}", protocol::accepted_fraction(&s)),
        ])
        .map_err(csv_err)?;
        eprintln!(
            "{name}: {:.2} kHz, p = {:.3e}, event rate 1/{:.0} s",
            b.repetition_rate / 1e3,
            b.success_probability,
            1.0 / b.event_rate
        );
    }
    w.write_record(["# config_hash", &config::config_hash(&base), "", "", "", "", "", "", "", ""]).map_err(csv_err)?;
    w.flush().map_err(io_err(&path))
}

fn cmd_calibrate(sargs: &ScenarioArgs, targets: Option<&Path>, out: &OutArgs) -> Result<(), CliError> {
    let base = sargs.load()?;
    let targets: CalibrationTargets = match targets {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => CalibrationTargets::default(),
    };
    prepare_dir(&out.out)?;
    let params = out.out.join("calibrated.toml");
    let residual_path = out.out.join("calibration.json");
    refuse_overwrite(&params, out.force)?;
    let report = calibrate(&base, &targets)?;
    #[derive(Serialize)]
    struct ReportFile<'a> {
        config_hash: String,
        converged: bool,
        residuals: &'a [protocol::Residual],
        notes: &'a [String],
    }
    write_json(
        &residual_path,
        &ReportFile {
            config_hash: config::config_hash(&report.scenario),
            converged: report.converged,
            residuals: &report.residuals,
            notes: &report.notes,
        },
    )?;
    for r in &report.residuals {
        eprintln!("{:<28} target {:<12.5e} achieved {:<12.5e} ({:.2}%)", r.observable, r.target, r.achieved, 100.0 * r.relative);
    }
    if !report.converged {
        return Err(CliError::Calibration(format!(
            "best residuals written to {}; {}",
            residual_path.display(),
            report.notes.join("; ")
        )));
    }
    let text = format!("# config_hash = \"{}\"\n{}", config::config_hash(&report.scenario), config::scenario_to_toml(&report.scenario));
    fs::write(&params, text).map_err(io_err(&params))
}

fn cmd_fidelity_table(sargs: &ScenarioArgs, trajectories: usize, seed: u64, out: &OutArgs) -> Result<(), CliError> {
    let base = sargs.load()?;
    let rows = fidelity_vs_length(&base, &protocol::table_presets(), trajectories, seed)?;
    prepare_dir(&out.out)?;
    let path = out.out.join("fidelity_vs_length.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "preset",
        "length_km",
        "readout1_us",
        "readout2_us",
        "memory1",
        "memory2",
        "contrast",
        "visibility",
        "fidelity",
        "delay_only_length_km",
        "delay_only_fidelity",
    ])
    .map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.name.clone(),
            format!("{}", r.length_km),
            format!("{:.2}", r.readout_times[0] * 1e6),
            format!("{:.2}", r.readout_times[1] * 1e6),
            format!("{:.5}", r.memory_coherence[0]),
            format!("{:.5}", r.memory_coherence[1]),
            format!("{:.5}", r.contrast),
            format!("{:.5}", r.visibility),
            format!("{:.5}", r.fidelity),
            format!("{:.2}", r.delay_only_length_km),
            format!("{:.5}", r.delay_only_fidelity),
        ])
        .map_err(csv_err)?;
        eprintln!("{}: F = {:.3} (delay only {:.3})", r.name, r.fidelity, r.delay_only_fidelity);
    }
    w.write_record(["# config_hash", &config::config_hash(&base), "", "", "", "", "", "", "", "", ""]).map_err(csv_err)?;
    w.flush().map_err(io_err(&path))
}

fn cmd_scan(sargs: &ScenarioArgs, span: f64, step: f64, coincidences: usize, seed: u64, out: &OutArgs) -> Result<(), CliError> {
    if !(step > 0.0 && span >= 0.0) {
        return Err(CliError::Config("--step must be positive and --span non-negative".into()));
    }
    let s = sargs.load()?;
    let n = (span / step).round() as i64;
    let offsets: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
    let points = interference_scan(&s, &offsets, coincidences, seed)?;
    prepare_dir(&out.out)?;
    let path = out.out.join("interference.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["delta_tau_ns", "n_null", "n_plus", "n_minus", "contrast", "contrast_error", "expected"]).map_err(csv_err)?;
    for p in &points {
        w.write_record([
            format!("{:.3}", p.delta_tau * 1e9),
            p.n_null.to_string(),
            p.n_plus.to_string(),
            p.n_minus.to_string(),
            format!("{:.5}", p.contrast),
            format!("{:.5}", p.contrast_error),
            format!("{:.5}", p.expected),
        ])
        .map_err(csv_err)?;
    }
    w.write_record(["# config_hash", &config::config_hash(&s), "", "", "", "", ""]).map_err(csv_err)?;
    w.flush().map_err(io_err(&path))
}

fn cmd_presets() -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["preset", "length_km", "l1_km", "l2_km", "a1_db", "a2_db", "t1_us", "t2_us"]).map_err(csv_err)?;
    for p in protocol::table_presets() {
        w.write_record([
            p.name.clone(),
            format!("{}", p.total_length_km),
            format!("{}", p.link1.length_km),
            format!("{}", p.link2.length_km),
            format!("{}", p.link1.attenuation_db.0),
            format!("{}", p.link2.attenuation_db.0),
            format!("{:.1}", p.readout_time1 * 1e6),
            format!("{:.1}", p.readout_time2 * 1e6),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, seed, mode, events, duration, out } => {
            cmd_simulate(&scenario, seed, mode.into(), events, duration, &out)
        }
        Command::Analyze { inputs, estimators, out } => cmd_analyze(&inputs, &estimators, &out),
        Command::Dephasing { scenario, node, duration, step, trajectories, seed, out } => {
            cmd_dephasing(&scenario, node, duration, step, trajectories, seed, &out)
        }
        Command::Rates { scenario, rows, out } => cmd_rates(&scenario, &rows, &out),
        Command::Calibrate { scenario, targets, out } => cmd_calibrate(&scenario, targets.as_deref(), &out),
        Command::FidelityTable { scenario, trajectories, seed, out } => cmd_fidelity_table(&scenario, trajectories, seed, &out),
        Command::Scan { scenario, span, step, coincidences, seed, out } => cmd_scan(&scenario, span, step, coincidences, seed, &out),
        Command::Presets => cmd_presets(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qlink: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
