use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use staleopt::delay::{delay_stats, simulate_delays};
use staleopt::harness::record::write_json;
use staleopt::harness::{
    compare, run_experiment, run_sweep, ExperimentConfig, Metric, RunOptions, RunRecord,
};
use staleopt::oracle::synth_classification;
use staleopt::rng::RunStreams;
use staleopt::Error;

#[derive(Parser)]
#[command(name = "staleopt", version, about = "Delay-robust stochastic optimization experiments")]
struct Cli {
    /// Print a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Run every point of the config's sweep axes.
    Sweep(SweepArgs),
    /// Compare the final metric of two run records.
    Compare(CompareArgs),
    /// Write a synthetic classification dataset as CSV.
    GenData(GenDataArgs),
    /// Simulate the configured delay schedule and report its statistics.
    Stats(ConfigArgs),
    /// Run (or sweep) with every invariant checked at every step.
    Audit(SweepArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, e.g. `--set delay.tau=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record metrics every N steps.
    #[arg(long, value_name = "N")]
    record_every: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// File stem of the outputs.
    #[arg(long, default_value = "run")]
    label: String,
    /// Store wall time in the JSON record.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads.
    #[arg(long, env = "STALE_OPT_JOBS", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON record of the first run.
    a: PathBuf,
    /// JSON record of the second run.
    b: PathBuf,
    /// `excess_loss` or `accuracy`.
    #[arg(long, default_value = "excess_loss")]
    metric: String,
    /// Directory for `comparison.json`; nothing is written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    examples: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// File name inside the output directory.
    #[arg(long, default_value = "synthetic.csv")]
    name: String,
}

#[derive(Serialize)]
struct RunSummary {
    label: String,
    valid: bool,
    final_excess_loss: Option<f64>,
    final_accuracy: Option<f64>,
    config_hash: String,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        Self {
            label: r.label.clone(),
            valid: r.valid,
            final_excess_loss: r.final_excess_loss,
            final_accuracy: r.final_accuracy,
            config_hash: r.config_hash.clone(),
        }
    }
}

#[derive(Serialize)]
struct ErrorOut {
    kind: String,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<String>,
}

#[derive(Serialize)]
struct Report {
    status: &'static str,
    command: &'static str,
    outputs: Vec<PathBuf>,
    runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorOut>,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Self {
            status: "ok",
            command,
            outputs: Vec::new(),
            runs: Vec::new(),
            result: None,
            error: None,
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_AUDIT: u8 = 3;

fn exit_code_for_kind(kind: &str) -> u8 {
    match kind {
        "invariant-violation" => EXIT_AUDIT,
        "numeric-error" | "optimizer-failure" => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn load_config(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
    for o in &args.overrides {
        staleopt::harness::config::apply_override(&mut doc, o)?;
    }
    if let Some(seed) = args.seed {
        doc.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if let Some(n) = args.record_every {
        doc.remove("record_per_decade");
        doc.insert("record_every".into(), toml::Value::Integer(n as i64));
    }
    let cfg = ExperimentConfig::from_table(doc)?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok((cfg, base))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Fills `report` from finished records and returns the exit code they imply.
fn add_records(report: &mut Report, records: &[RunRecord], dir: &Path) -> Result<u8, Error> {
    let mut code = 0;
    for r in records {
        let (c, j) = r.write(dir)?;
        report.outputs.extend([c, j]);
        report.runs.push(r.into());
        if let Some(e) = &r.error {
            eprintln!("run `{}` stopped at step {}: {}", r.label, r.steps_completed + 1, e.message);
            code = code.max(exit_code_for_kind(&e.kind));
            report.error.get_or_insert_with(|| ErrorOut {
                kind: e.kind.clone(),
                message: format!("run `{}`: {}", r.label, e.message),
                key: e.key.clone(),
            });
        }
    }
    Ok(code)
}

fn print_runs(records: &[RunRecord]) {
    for r in records {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{}: {} T={} valid={} excess_loss={} accuracy={}",
            r.label,
            r.algorithm,
            r.iterations,
            r.valid,
            fmt(r.final_excess_loss),
            r.final_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}")),
        );
    }
}

fn execute(command: &Command, json: bool, report: &mut Report) -> Result<u8, Error> {
    match command {
        Command::Run(args) => {
            let (cfg, base) = load_config(&args.config)?;
            let opts = RunOptions {
                label: args.label.clone(),
                audit: false,
                timing: args.timing,
            };
            let rec = run_experiment(&cfg, &base, &opts)?;
            let code = add_records(report, std::slice::from_ref(&rec), &args.config.out)?;
            if !json {
                print_runs(std::slice::from_ref(&rec));
            }
            Ok(code)
        }
        Command::Sweep(args) | Command::Audit(args) => {
            let audit = matches!(command, Command::Audit(_));
            let (cfg, base) = load_config(&args.config)?;
            let records = if audit && cfg.sweep.is_empty() {
                let opts = RunOptions {
                    label: "audit".into(),
                    audit: true,
                    timing: false,
                };
                vec![run_experiment(&cfg, &base, &opts)?]
            } else {
                let result = run_sweep(&cfg, &base, args.jobs, audit)?;
                create_dir(&args.config.out)?;
                let summary = args.config.out.join("sweep-summary.json");
                write_json(&summary, &result.summary)?;
                report.outputs.push(summary);
                result.records
            };
            let code = add_records(report, &records, &args.config.out)?;
            if !json {
                print_runs(&records);
                if audit && code == 0 {
                    println!("audit passed: {} run(s), every invariant held at every step", records.len());
                }
            }
            Ok(code)
        }
        Command::Compare(args) => {
            let metric: Metric = args.metric.parse()?;
            let a = RunRecord::load(&args.a)?;
            let b = RunRecord::load(&args.b)?;
            let c = compare(&a, &b, metric)?;
            if let Some(dir) = &args.out {
                create_dir(dir)?;
                let path = dir.join("comparison.json");
                write_json(&path, &c)?;
                report.outputs.push(path);
            }
            if !json {
                let ratio = c.ratio.map_or("n/a".to_string(), |r| format!("{r:.6}"));
                println!(
                    "{metric}: a={:.6e} b={:.6e} ratio(b/a)={ratio} difference(b-a)={:.6e}",
                    c.a_final, c.b_final, c.difference
                );
            }
            report.result = Some(serde_json::to_value(&c).expect("comparison serializes"));
            Ok(0)
        }
        Command::GenData(args) => {
            let data = synth_classification(args.dim, args.examples, args.classes, args.separation, args.seed)?;
            create_dir(&args.out)?;
            let path = args.out.join(&args.name);
            data.write_csv(&path)?;
            if !json {
                println!(
                    "wrote {} examples, {} features, {} classes to {}",
                    data.example_count(),
                    data.feature_count(),
                    data.classes(),
                    path.display()
                );
            }
            report.outputs.push(path);
            Ok(0)
        }
        Command::Stats(args) => {
            let (cfg, _) = load_config(args)?;
            let mut streams = RunStreams::new(cfg.seed, 0);
            let delays = simulate_delays(&cfg.delay.schedule(), cfg.iterations, &mut streams.delay)?;
            let stats = delay_stats(&delays)?;
            create_dir(&args.out)?;
            let path = args.out.join("delay-stats.json");
            write_json(&path, &stats)?;
            if !json {
                println!(
                    "steps={} mean={:.4} variance={:.4} max={}",
                    stats.count, stats.mean, stats.variance, stats.max
                );
            }
            report.outputs.push(path);
            report.result = Some(serde_json::to_value(&stats).expect("stats serialize"));
            Ok(0)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Run(_) => "run",
        Command::Sweep(_) => "sweep",
        Command::Compare(_) => "compare",
        Command::GenData(_) => "gen-data",
        Command::Stats(_) => "stats",
        Command::Audit(_) => "audit",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let mut report = Report::new(command_name(&cli.command));
    let code = match execute(&cli.command, cli.json, &mut report) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let key = match &e {
                Error::InvalidConfiguration { key, .. } => Some(key.clone()),
                _ => None,
            };
            report.error = Some(ErrorOut {
                kind: e.kind().to_string(),
                message: e.to_string(),
                key,
            });
            exit_code_for_kind(e.kind())
        }
    };
    if code != 0 {
        report.status = "error";
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    ExitCode::from(code)
}
