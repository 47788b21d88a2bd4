//! CLI for the entropy-based DDoS detector: generate traces, calibrate
//! thresholds, run detection, score against labels, and build CSP reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use entroflow::alerting::{
    build_advisory_report, notify_client, Alert, AlertSink, JsonlAlertSink,
};
use entroflow::calibration::{
    build_baseline, calibrate, BaselineProfile, CalibratedThresholds, WindowLabel,
};
use entroflow::entropy::FeatureKind;
use entroflow::error::{Error, Result};
use entroflow::flow_model::{read_trace_file, serialize_csv_record, FlowKey, FlowRecord, CSV_HEADER};
use entroflow::pipeline::{run_pipeline, DetectorConfig, FeatureCombination, WindowVerdict};
use entroflow::traffic_gen::{build_scenario, AttackParams, LegitParams, SpoofMode};

#[derive(Parser)]
#[command(name = "entroflow", version, about = "Entropy-based two-stage DDoS detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace (and optional ground-truth labels)
    Generate(GenerateArgs),
    /// Derive th1/th2 from an attack-free trace at a target false-positive rate
    Calibrate(CalibrateArgs),
    /// Run the two-stage pipeline over a trace
    Detect(DetectArgs),
    /// Rebuild the CSP advisory report from a verdict log
    Report(ReportArgs),
    /// Score detector output against per-window ground-truth labels
    Evaluate(EvaluateArgs),
}

/// Detector settings shared by calibrate/detect/report/evaluate. A JSON
/// config file may supply any of these; command-line flags take precedence.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file whose keys mirror these flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Thresholds file produced by `calibrate` (supplies th1/th2)
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    window_seconds: Option<f64>,
    /// Comma-separated list: src-addr,dst-addr,src-port,dst-port,flow-size,in-degree
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    th1: Option<f64>,
    #[arg(long)]
    th2: Option<f64>,
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long)]
    block_order: Option<usize>,
    #[arg(long)]
    history: Option<usize>,
    /// How per-feature verdicts combine: any | all
    #[arg(long)]
    combine: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(alias = "window-seconds")]
    window_seconds: Option<f64>,
    features: Option<Vec<String>>,
    th1: Option<f64>,
    th2: Option<f64>,
    #[serde(alias = "log-base")]
    log_base: Option<f64>,
    #[serde(alias = "block-order")]
    block_order: Option<usize>,
    history: Option<usize>,
    combine: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<DetectorConfig> {
        let file: FileConfig = match &self.config {
            Some(path) => serde_json::from_reader(File::open(path)?)?,
            None => FileConfig::default(),
        };
        let profile: Option<CalibratedThresholds> = match &self.profile {
            Some(path) => {
                let doc: CalibrationOutput = serde_json::from_reader(File::open(path)?)?;
                Some(doc.thresholds)
            }
            None => None,
        };
        let mut config = DetectorConfig::default();
        if let Some(v) = file.window_seconds {
            config.window_duration = v;
        }
        if let Some(names) = &file.features {
            config.features = parse_features_list(names)?;
        }
        if let Some(t) = &profile {
            config.th1 = t.th1;
            config.th2 = t.th2;
        }
        if let Some(v) = file.th1 {
            config.th1 = v;
        }
        if let Some(v) = file.th2 {
            config.th2 = v;
        }
        if let Some(v) = file.log_base {
            config.log_base = v;
        }
        if let Some(v) = file.block_order {
            config.block_order = v;
        }
        if let Some(v) = file.history {
            config.confirmation_history = v;
        }
        if let Some(v) = &file.combine {
            config.feature_combination = v.parse()?;
        }
        // Command-line flags win over both file and profile.
        if let Some(v) = self.window_seconds {
            config.window_duration = v;
        }
        if let Some(names) = &self.features {
            let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
            config.features = parse_features_list(&names)?;
        }
        if let Some(v) = self.th1 {
            config.th1 = v;
        }
        if let Some(v) = self.th2 {
            config.th2 = v;
        }
        if let Some(v) = self.log_base {
            config.log_base = v;
        }
        if let Some(v) = self.block_order {
            config.block_order = v;
        }
        if let Some(v) = self.history {
            config.confirmation_history = v;
        }
        if let Some(v) = &self.combine {
            config.feature_combination = v.parse::<FeatureCombination>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_features_list(names: &[String]) -> Result<Vec<FeatureKind>> {
    names.iter().map(|n| n.parse()).collect()
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace duration in seconds
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Legitimate records per second
    #[arg(long, default_value_t = 300.0)]
    rate: f64,
    #[arg(long, default_value_t = 200)]
    n_sources: u32,
    #[arg(long, default_value_t = 20)]
    n_destinations: u32,
    /// Zipf exponent over the source pool (0 = uniform)
    #[arg(long, default_value_t = 0.0)]
    skew: f64,
    /// Flood start, seconds from trace epoch; enables the attack together
    /// with --attack-rate
    #[arg(long)]
    attack_start: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    attack_duration: f64,
    /// Flood records per second
    #[arg(long)]
    attack_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    n_bots: u32,
    /// Victim flow, ADDR:PORT
    #[arg(long, default_value = "10.99.0.1:80")]
    victim: FlowKey,
    /// fixed | random spoofed sources
    #[arg(long, default_value = "fixed")]
    spoof: SpoofMode,
    /// Window length used for ground-truth labels
    #[arg(long, default_value_t = 1.0)]
    window_seconds: f64,
    /// Trace output path (.csv or .jsonl)
    #[arg(long)]
    out: PathBuf,
    /// Labels output path (JSONL)
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Attack-free trace
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    target_fpr: f64,
    /// Output thresholds/profile JSON
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Verdict JSONL output
    #[arg(long)]
    out: PathBuf,
    /// Alert JSONL output
    #[arg(long)]
    alerts: Option<PathBuf>,
    /// Client notification channel: a file path, or `-` for stdout
    #[arg(long, default_value = "-")]
    notify: String,
    /// Advisory report JSON output
    #[arg(long)]
    advisory: Option<PathBuf>,
    /// Trace identity recorded in the advisory report (defaults to the path)
    #[arg(long)]
    trace_id: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Verdict JSONL produced by `detect`
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    trace_id: String,
    /// Report JSON output
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Ground-truth labels JSONL
    #[arg(long)]
    labels: PathBuf,
    /// Metrics JSON output
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Serialize, Deserialize)]
struct CalibrationOutput {
    #[serde(flatten)]
    thresholds: CalibratedThresholds,
    profiles: Vec<BaselineProfile>,
}

fn write_trace(path: &Path, records: &[FlowRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    );
    if jsonl {
        for record in records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
    } else {
        writeln!(out, "{CSV_HEADER}")?;
        for record in records {
            writeln!(out, "{}", serialize_csv_record(record))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_labels(path: &Path, labels: &[WindowLabel]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for label in labels {
        serde_json::to_writer(&mut out, label)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<WindowLabel>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn read_verdicts(path: &Path) -> Result<Vec<WindowVerdict>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn cmd_generate(args: &GenerateArgs) -> Result<u8> {
    let legit = LegitParams {
        n_sources: args.n_sources,
        n_destinations: args.n_destinations,
        records_per_second: args.rate,
        duration: args.duration,
        source_skew: args.skew,
        seed: args.seed,
    };
    let attack = match (args.attack_start, args.attack_rate) {
        (Some(start), Some(rate)) => Some(AttackParams {
            n_bots: args.n_bots,
            victim: args.victim,
            records_per_second: rate,
            start,
            duration: args.attack_duration,
            spoof_mode: args.spoof,
            seed: args.seed.wrapping_add(0x5eed),
        }),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "--attack-start and --attack-rate must be given together".into(),
            ))
        }
    };
    let scenario = build_scenario(&legit, attack.as_ref(), args.window_seconds)?;
    write_trace(&args.out, &scenario.records)?;
    if let Some(labels_out) = &args.labels_out {
        write_labels(labels_out, &scenario.labels)?;
    }
    eprintln!(
        "generated {} records ({} windows labeled)",
        scenario.records.len(),
        scenario.labels.len()
    );
    Ok(0)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<u8> {
    let config = args.config.resolve()?;
    let records = read_trace_file(&args.trace)?;
    let profiles = build_baseline(&records, &config)?;
    let thresholds = calibrate(&profiles, args.target_fpr)?;
    eprintln!("calibrated th1={} th2={}", thresholds.th1, thresholds.th2);
    let doc = CalibrationOutput {
        thresholds,
        profiles,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(&args.out)?), &doc)?;
    Ok(0)
}

/// Writes alerts to the JSONL log and client notifications to the
/// notification channel, in emission order.
struct CliAlertSink {
    log: Option<JsonlAlertSink<BufWriter<File>>>,
    notify: Box<dyn Write>,
}

impl AlertSink for CliAlertSink {
    fn emit(&mut self, alert: &Alert) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.emit(alert)?;
        } else {
            alert.validate()?;
        }
        writeln!(self.notify, "{}", notify_client(alert))?;
        Ok(())
    }
}

fn cmd_detect(args: &DetectArgs) -> Result<u8> {
    let config = args.config.resolve()?;
    let records = read_trace_file(&args.trace)?;
    let notify: Box<dyn Write> = if args.notify == "-" {
        Box::new(std::io::stdout())
    } else {
        Box::new(BufWriter::new(File::create(&args.notify)?))
    };
    let mut sink = CliAlertSink {
        log: match &args.alerts {
            Some(path) => Some(JsonlAlertSink::new(BufWriter::new(File::create(path)?))),
            None => None,
        },
        notify,
    };
    let summary = run_pipeline(&records, &config, &mut sink)?;
    if let Some(log) = sink.log {
        log.into_inner().flush()?;
    }
    sink.notify.flush()?;

    let mut out = BufWriter::new(File::create(&args.out)?);
    for verdict in &summary.verdicts {
        serde_json::to_writer(&mut out, verdict)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    if let Some(advisory_path) = &args.advisory {
        let trace_id = args
            .trace_id
            .clone()
            .unwrap_or_else(|| args.trace.display().to_string());
        let report = build_advisory_report(&summary.verdicts, &config, &trace_id);
        let mut out = BufWriter::new(File::create(advisory_path)?);
        serde_json::to_writer(&mut out, &report)?;
        out.flush()?;
    }

    eprintln!(
        "windows={} suspected={} attacked={} discarded_packets={}",
        summary.windows, summary.suspected, summary.attacked, summary.discarded_packets
    );
    Ok(if summary.attacked > 0 { 2 } else { 0 })
}

fn cmd_report(args: &ReportArgs) -> Result<u8> {
    let config = args.config.resolve()?;
    let verdicts = read_verdicts(&args.verdicts)?;
    let report = build_advisory_report(&verdicts, &config, &args.trace_id);
    let mut out = BufWriter::new(File::create(&args.out)?);
    serde_json::to_writer(&mut out, &report)?;
    out.flush()?;
    Ok(0)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<u8> {
    let config = args.config.resolve()?;
    let records = read_trace_file(&args.trace)?;
    let labels = read_labels(&args.labels)?;
    let metrics = entroflow::calibration::evaluate(&records, &labels, &config)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(&args.out)?), &metrics)?;
    if let Some(dr) = metrics.detection_rate {
        eprintln!("detection_rate={dr} fpr={}", metrics.false_positive_rate);
    } else {
        eprintln!("fpr={}", metrics.false_positive_rate);
    }
    Ok(0)
}

fn main() -> ExitCode {
    // Usage errors exit 1; code 2 is reserved for confirmed attacks.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            e.print().expect("stderr is writable");
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Report(args) => cmd_report(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
