use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bcaci::harness::{
    designated_trace, emit_outputs, k_sweep, lambda_sweep, summarize, write_trace_csv, DataSource, GridSpec,
    HarnessError, SweepRow, DEFAULT_LAGS, DEFAULT_PENALTY,
};
use bcaci::seriesgen::DEFAULT_MAX_LEN;
use bcaci::{
    kill_test, run_grid, run_one, AggregateReport, CalibratorConfig, KillTestVerdict, ModelKind, RunConfig,
    ScenarioKind, ScenarioSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bcaci", version, about = "Bias-corrected adaptive conformal inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration per seed (or one external series) and print JSON.
    Run(RunArgs),
    /// Run the synthetic grid and write the report, tables and trace.
    Grid(GridArgs),
    /// Apply the four-criterion gate to a report file or a fresh grid.
    KillTest(KillTestArgs),
    /// Sweep lambda or k over a grid.
    Sweep(SweepArgs),
    /// Write per-step traces of one run for both methods.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct CalibArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.005)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    k: f64,
    #[arg(long, default_value_t = 200)]
    window: usize,
    #[arg(long, default_value_t = 50)]
    n0: usize,
    /// Run the treatment arm with bias correction off (both arms become ACI).
    #[arg(long)]
    no_bias_correction: bool,
    #[arg(long, default_value_t = DEFAULT_LAGS)]
    lags: usize,
    #[arg(long, default_value_t = DEFAULT_PENALTY)]
    penalty: f64,
}

impl CalibArgs {
    fn config(&self) -> CalibratorConfig {
        CalibratorConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            lambda: self.lambda,
            k: self.k,
            window: self.window,
            n0: self.n0,
            bias_correction: !self.no_bias_correction,
        }
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Scenarios, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["stable", "mean_shift", "vol_shift", "compound_shift"])]
    scenario: Vec<ScenarioKind>,
    /// Models, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["ridge", "random_walk"])]
    model: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 12, 24])]
    horizons: Vec<usize>,
    /// Seed list (`0,3,7`) or half-open range (`0..10`).
    #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
    seeds: Seeds,
    #[command(flatten)]
    calib: CalibArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec {
            scenarios: self.scenario.clone(),
            models: self.model.clone(),
            horizons: self.horizons.clone(),
            seeds: self.seeds.0.clone(),
            calibrator: self.calib.config(),
            lags: self.calib.lags,
            penalty: self.calib.penalty,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "mean_shift")]
    scenario: ScenarioKind,
    #[arg(long, default_value = "ridge")]
    model: ModelKind,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 12, 24])]
    horizons: Vec<usize>,
    #[arg(long, default_value = "0", value_parser = parse_seeds)]
    seeds: Seeds,
    #[command(flatten)]
    calib: CalibArgs,
    /// External series; replaces the synthetic scenario.
    #[arg(long, requires = "column")]
    csv: Option<PathBuf>,
    #[arg(long)]
    column: Option<String>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct KillTestArgs {
    /// Existing report.json; when absent the grid is run.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Lambda,
    K,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "lambda")]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.10])]
    values: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long, default_value = "mean_shift")]
    scenario: ScenarioKind,
    #[arg(long, default_value = "ridge")]
    model: ModelKind,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    calib: CalibArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(Seeds(seeds))
}

fn init_pool(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring worker pool")
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "-".into(), |p| format!("{p:.2e}"))
}

fn print_report(report: &AggregateReport) {
    println!(
        "{:<16} {:>10} {:>10} {:>7} {:>7} {:>8} {:>9}",
        "scenario", "aci_wink", "bc_wink", "aci_cov", "bc_cov", "ratio", "p"
    );
    for (k, s) in &report.per_scenario {
        println!(
            "{:<16} {:>10.3} {:>10.3} {:>7.3} {:>7.3} {:>8.3} {:>9}",
            k,
            s.aci.winkler,
            s.bcaci.winkler,
            s.aci.coverage,
            s.bcaci.coverage,
            s.ratio,
            fmt_p(s.p_value)
        );
    }
    for (m, rows) in &report.per_model {
        for (k, s) in rows {
            println!("{:<16} {:<16} ratio {:.3}  p {}", m, k, s.ratio, fmt_p(s.p_value));
        }
    }
    println!(
        "{} paired runs, {} method runs ({})",
        report.runs.paired_runs, report.runs.method_runs, report.runs.note
    );
}

fn print_verdict(v: &KillTestVerdict) {
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    println!("c1 ratio < 0.95 on >= 2 shifted scenarios: {}", mark(v.c1));
    println!("c2 stable ratio < 1.05:                    {}", mark(v.c2));
    println!("c3 cell coverage >= 0.80:                  {}", mark(v.c3));
    println!("c4 compound_shift p < 0.05:                {}", mark(v.c4));
    println!("kill-test: {}", mark(v.pass));
}

fn print_sweep(rows: &[SweepRow]) {
    println!("{:<7} {:>8} {:>10} {:>10} {:>7} {:>7} {:>9}", "param", "value", "aci_wink", "bc_wink", "ratio", "bc_cov", "corr_rate");
    for r in rows {
        println!(
            "{:<7} {:>8} {:>10.3} {:>10.3} {:>7.3} {:>7.3} {:>9.4}",
            r.parameter, r.value, r.aci_winkler, r.bcaci_winkler, r.ratio, r.bcaci_coverage, r.correction_rate
        );
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    init_pool(args.jobs)?;
    let sources: Vec<DataSource> = match (&args.csv, &args.column) {
        (Some(path), Some(column)) => vec![DataSource::Csv {
            path: path.clone(),
            column: column.clone(),
            max_len: DEFAULT_MAX_LEN,
        }],
        _ => args
            .seeds
            .0
            .iter()
            .map(|&seed| DataSource::Synthetic(ScenarioSpec::new(args.scenario, seed)))
            .collect(),
    };
    let mut results = Vec::with_capacity(sources.len());
    for source in sources {
        let config = RunConfig {
            source,
            model: args.model,
            horizons: args.horizons.clone(),
            calibrator: args.calib.config(),
            lags: args.calib.lags,
            penalty: args.calib.penalty,
            record_trace: false,
        };
        results.push(run_one(&config)?);
    }
    match &args.out {
        Some(path) => write_json(path, &results),
        None => {
            println!("{}", serde_json::to_string_pretty(&results)?);
            Ok(())
        }
    }
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    init_pool(args.jobs)?;
    let spec = args.spec();
    let report = run_grid(&spec)?;
    let trace = designated_trace(&spec)?;
    let files = emit_outputs(&report, Some(&trace), &args.out)?;
    print_report(&report);
    if let Some(v) = &report.kill_test {
        print_verdict(v);
    }
    println!("wrote {}", files.report_json.display());
    Ok(())
}

fn cmd_kill_test(args: KillTestArgs) -> Result<bool> {
    let report: AggregateReport = match &args.report {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            init_pool(args.grid.jobs)?;
            let spec = args.grid.spec();
            summarize(&spec, &bcaci::harness::run_grid_runs(&spec)?)?
        }
    };
    let verdict = match kill_test(&report) {
        Ok(v) => v,
        Err(HarnessError::IncompleteReport(msg)) => bail!("cannot apply the kill-test: {msg}"),
        Err(e) => return Err(e.into()),
    };
    print_verdict(&verdict);
    Ok(verdict.pass)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    init_pool(args.grid.jobs)?;
    let spec = args.grid.spec();
    let rows = match args.param {
        SweepParam::Lambda => lambda_sweep(&spec, &args.values)?,
        SweepParam::K => k_sweep(&spec, &args.values)?,
    };
    print_sweep(&rows);
    write_json(&args.grid.out.join("sweep.json"), &rows)
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let config = RunConfig {
        source: DataSource::Synthetic(ScenarioSpec::new(args.scenario, args.seed)),
        model: args.model,
        horizons: vec![args.horizon],
        calibrator: args.calib.config(),
        lags: args.calib.lags,
        penalty: args.calib.penalty,
        record_trace: true,
    };
    let run = run_one(&config)?;
    let hr = &run.horizons[0];
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_trace_csv(&args.out.join("trace_aci.csv"), &hr.trace_aci)?;
    write_trace_csv(&args.out.join("trace_bcaci.csv"), &hr.trace_bcaci)?;
    println!(
        "{} h={} aci winkler {:.3}, bcaci winkler {:.3}, {} steps",
        run.label,
        hr.horizon,
        hr.aci.mean_winkler,
        hr.bcaci.mean_winkler,
        hr.trace_aci.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|()| true),
        Command::Grid(a) => cmd_grid(a).map(|()| true),
        Command::KillTest(a) => cmd_kill_test(a),
        Command::Sweep(a) => cmd_sweep(a).map(|()| true),
        Command::Trace(a) => cmd_trace(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
