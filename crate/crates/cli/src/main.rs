//! `ncce`: run seeded noncoherent channel-estimation experiments.
//!
//! Exit status is 0 on success, 1 for configuration errors and 2 for
//! runtime or numerical failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncce::experiments::{
    find_min_measurements, run_trial, run_trials, sweep_array_size, sweep_mcs, validate, write_ladder_json,
    write_scaling_csv, write_summary_csv, write_sweep_json, write_trials_csv, write_trials_json, LadderOptions,
    SweepPoint, SweepResult, TrialConfig,
};
use ncce::sensing::build_ensemble;
use ncce::{EstimatorMode, Error};

#[derive(Parser)]
#[command(name = "ncce", version, about = "Noncoherent compressive channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML file with `TrialConfig` fields; missing fields take defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per point
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output format; `trial` defaults to json, everything else to csv
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

#[derive(Args)]
struct LadderArgs {
    #[arg(long, default_value_t = 0.99)]
    target: f64,
    #[arg(long, default_value_t = 1.0)]
    loss_db: f64,
    /// First rung (defaults to 2K + 2)
    #[arg(long)]
    m_start: Option<usize>,
    #[arg(long, default_value_t = 2048)]
    m_cap: usize,
    /// Constants c in the M_CS rule clamp(round(c K log2 N), 2K + 1, M / 2);
    /// several values sweep M_CS at every rung
    #[arg(long, value_delimiter = ',', default_value = "1.5")]
    mcs_factor: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded trial, printed as JSON
    Trial {
        #[command(flatten)]
        common: Common,
        /// Also write the sensing ensemble as a JSON sidecar
        #[arg(long)]
        ensemble_out: Option<PathBuf>,
    },
    /// Loss and success rate as a function of M_CS at fixed M
    SweepMcs {
        #[command(flatten)]
        common: Common,
        /// Comma-separated M_CS values
        #[arg(long, value_delimiter = ',', required = true)]
        mcs: Vec<usize>,
    },
    /// Smallest M reaching the target success rate
    MinM {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ladder: LadderArgs,
    },
    /// Minimal M over a grid of array sizes and path counts
    Scaling {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long, value_delimiter = ',', default_value = "32,128,512")]
        n_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        k_values: Vec<usize>,
        /// Also run the coherent baseline and report the overhead ratio
        #[arg(long)]
        coherent: bool,
    },
    /// Run the built-in invariant checks
    Validate {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<TrialConfig> {
    let mut cfg = match &common.config {
        Some(path) => TrialConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => TrialConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `runs/out.csv` -> `runs/out.summary.csv`.
fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn ladder_options(args: &LadderArgs, common: &Common) -> LadderOptions {
    LadderOptions {
        target_rate: args.target,
        loss_db: args.loss_db,
        trials_per_point: common.trials.unwrap_or(400),
        m_start: args.m_start,
        m_cap: args.m_cap,
        mcs_factors: args.mcs_factor.clone(),
        workers: common.workers,
        ..LadderOptions::default()
    }
}

fn cmd_trial(common: &Common, ensemble_out: Option<&Path>) -> CliResult {
    let cfg = load_config(common)?;
    let mut out = open_out(common.out.as_deref())?;
    match common.trials {
        Some(n) if n > 1 => {
            let records = run_trials(&cfg, 0..n, common.workers)?;
            match common.format_or(Format::Json) {
                Format::Csv => write_trials_csv(&mut out, &records, true)?,
                Format::Json => write_trials_json(&mut out, &records, true)?,
            }
        }
        _ => {
            let record = run_trial(&cfg)?;
            match common.format_or(Format::Json) {
                Format::Csv => write_trials_csv(&mut out, std::slice::from_ref(&record), true)?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &record).map_err(Error::from)?;
                    writeln!(out)?;
                }
            }
        }
    }
    out.flush()?;
    if let Some(path) = ensemble_out {
        if cfg.mode != EstimatorMode::Noncoherent {
            return Err(Failure::Config("--ensemble-out needs mode = \"noncoherent\"".into()));
        }
        build_ensemble(cfg.m, cfg.m_cs, cfg.n_elements, cfg.seed)?.save_json(path)?;
    }
    Ok(())
}

fn cmd_sweep_mcs(common: &Common, mcs: &[usize]) -> CliResult {
    let cfg = load_config(common)?;
    let output = sweep_mcs(&cfg, mcs, common.trials.unwrap_or(200), common.workers)?;
    match (common.format_or(Format::Csv), &common.out) {
        (Format::Json, _) => {
            let mut out = open_out(common.out.as_deref())?;
            write_sweep_json(&mut out, &output.result)?;
            out.flush()?;
            if let Some(path) = &common.out {
                let trials = path.with_extension("trials.json");
                write_trials_json(File::create(trials)?, &output.records, true)?;
            }
        }
        (Format::Csv, Some(path)) => {
            write_trials_csv(BufWriter::new(File::create(path)?), &output.records, true)?;
            write_summary_csv(BufWriter::new(File::create(summary_path(path))?), &output.result)?;
        }
        (Format::Csv, None) => write_summary_csv(io::stdout().lock(), &output.result)?,
    }
    for p in &output.result.points {
        eprintln!(
            "m_cs={} success={:.4} mean_loss_db={:.3} mean_loss_all_paths_db={:.3}",
            p.axis_value, p.success_rate, p.mean_loss_db, p.mean_loss_all_paths_db
        );
    }
    Ok(())
}

fn cmd_min_m(common: &Common, ladder: &LadderArgs) -> CliResult {
    let cfg = load_config(common)?;
    let outcome = find_min_measurements(&cfg, &ladder_options(ladder, common))?;
    let mut out = open_out(common.out.as_deref())?;
    match common.format_or(Format::Csv) {
        Format::Json => write_ladder_json(&mut out, &outcome)?,
        Format::Csv => {
            let points: Vec<SweepPoint> = outcome.rungs.iter().map(|r| r.point.clone()).collect();
            write_summary_csv(&mut out, &SweepResult { axis: "m".into(), points })?;
        }
    }
    out.flush()?;
    match outcome.m_star {
        Some(m) => eprintln!("m_star={m}"),
        None => eprintln!("m_star=not found up to {}", ladder.m_cap),
    }
    Ok(())
}

fn cmd_scaling(common: &Common, ladder: &LadderArgs, n_values: &[usize], k_values: &[usize], coherent: bool) -> CliResult {
    let cfg = load_config(common)?;
    let table = sweep_array_size(&cfg, n_values, k_values, &ladder_options(ladder, common), coherent)?;
    let mut out = open_out(common.out.as_deref())?;
    match common.format_or(Format::Csv) {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &table).map_err(Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => write_scaling_csv(&mut out, &table)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_validate(format: Format) -> CliResult {
    let checks = validate::run_all()?;
    let mut out = io::stdout().lock();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &checks).map_err(Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            for c in &checks {
                writeln!(out, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Trial { common, ensemble_out } => cmd_trial(common, ensemble_out.as_deref()),
        Command::SweepMcs { common, mcs } => cmd_sweep_mcs(common, mcs),
        Command::MinM { common, ladder } => cmd_min_m(common, ladder),
        Command::Scaling { common, ladder, n_values, k_values, coherent } => {
            cmd_scaling(common, ladder, n_values, k_values, *coherent)
        }
        Command::Validate { format } => cmd_validate(*format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
