use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use startrack::attitude::Quaternion;
use startrack::camera::CameraModel;
use startrack::catalog::{open_database, CatalogError, StarDatabase};
use startrack::checks::{self, case_preset, CaseError, Check};
use startrack::harness::{bench, run_campaign, write_bench, BenchCase, CampaignReport, OutputFormat};
use startrack::pipeline::PipelineConfig;
use startrack::quatera::{quatera_estimate, QuateraError, QuaternionWindow};
use startrack::simulator::{ScenarioConfig, SimError};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Quatera(#[from] QuateraError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config {path}: {source}")]
    Config { path: PathBuf, source: toml::de::Error },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchArg {
    Best,
    Worst,
}

#[derive(Parser)]
#[command(name = "startrack", version, about = "Recursive star identification toolkit")]
struct Cli {
    /// Base seed for simulated frames.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// CSV star catalog or binary pair database; defaults to the bundled catalog.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Output file; defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Exit with status 2 when a result violates its threshold.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the pair database. Binary by default, or the sorted pair list
    /// with `--format csv`.
    BuildDb {
        #[arg(long, default_value_t = 5.0)]
        magnitude: f64,
        /// Write the binary database even when `--format csv` is given.
        #[arg(long)]
        binary: bool,
    },
    /// Time recursive identification against Pyramid.
    Bench {
        #[arg(value_enum)]
        case: BenchArg,
        #[arg(long, default_value_t = 100_000)]
        runs: usize,
        #[arg(long, default_value_t = 10)]
        max_spikes: u32,
    },
    /// Monte Carlo campaign over one of the four simulated cases.
    RunCase {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Sample period in seconds, overriding the case default.
        #[arg(long)]
        period: Option<f64>,
        /// TOML file with optional `[scenario]` and `[pipeline]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write per-frame rows of every trial to this file.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Estimate the angular velocity from a quaternion log (`t,qx,qy,qz,qw`).
    Replay {
        log: PathBuf,
        /// TOML file with an optional `[pipeline]` table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
struct RunConfig {
    scenario: Option<ScenarioConfig>,
    pipeline: Option<PipelineConfig>,
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_owned(),
        source,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        eprintln!("check {c}");
    }
    checks::all_pass(checks)
}

fn database(cli: &Cli, camera: &CameraModel) -> Result<StarDatabase, CliError> {
    Ok(open_database(
        cli.catalog.as_deref(),
        camera.magnitude_threshold,
        camera.fov_diagonal(),
    )?)
}

fn build_db(cli: &Cli, magnitude: f64, binary: bool) -> Result<bool, CliError> {
    let camera = CameraModel::default();
    let db = open_database(cli.catalog.as_deref(), magnitude, camera.fov_diagonal())?;
    eprintln!("{} stars, {} pairs", db.stars().len(), db.pairs().len());
    let out = output(cli.out.as_deref())?;
    match (cli.format, binary) {
        (Format::Csv, false) => db.write_pairs_csv(out)?,
        _ => db.save_binary(out)?,
    }
    Ok(true)
}

fn run_bench(cli: &Cli, case: BenchArg, runs: usize, max_spikes: u32) -> Result<bool, CliError> {
    let camera = CameraModel::default();
    let db = database(cli, &camera)?;
    let case = match case {
        BenchArg::Best => BenchCase::Best,
        BenchArg::Worst => BenchCase::Worst,
    };
    let records = bench(&db, &camera, case, runs, 0..=max_spikes, cli.seed);
    write_bench(&records, output(cli.out.as_deref())?, cli.format.into())?;
    Ok(!cli.check || report_checks(&checks::check_bench(case, &records)))
}

fn campaign(
    db: &StarDatabase,
    case: u8,
    period: Option<f64>,
    trials: usize,
    seed: u64,
    overrides: &RunConfig,
) -> Result<CampaignReport, CliError> {
    let (scenario, pipeline) = case_preset(case, period)?;
    let scenario = overrides.scenario.unwrap_or(scenario).with_seed(seed);
    let pipeline = overrides.pipeline.unwrap_or(pipeline);
    Ok(run_campaign(&scenario, trials, db, &pipeline)?)
}

fn run_case(
    cli: &Cli,
    case: u8,
    trials: usize,
    period: Option<f64>,
    config: Option<&Path>,
    frames: Option<&Path>,
) -> Result<bool, CliError> {
    let overrides = match config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    let camera = overrides.pipeline.map(|p| p.camera).unwrap_or_default();
    let db = database(cli, &camera)?;
    let report = campaign(&db, case, period, trials, cli.seed, &overrides)?;
    eprintln!(
        "case {case}: {trials} trials, fallback {:.3}%, Pyramid {:.3}% of frames",
        report.fallback_percent, report.pyramid_percent
    );
    report.write(output(cli.out.as_deref())?, cli.format.into())?;
    if let Some(f) = frames {
        report.write_frames(io::BufWriter::new(File::create(f)?), cli.format.into())?;
    }
    if !cli.check {
        return Ok(true);
    }
    let results = match case {
        1 => checks::check_case1(&report),
        2 => {
            let compass = campaign(&db, 1, period, trials, cli.seed, &RunConfig::default())?;
            checks::check_case2(&report, Some(&compass))
        }
        3 => checks::check_case3(&report),
        _ => {
            // The comparison needs both sampling rates.
            let slow = campaign(&db, 4, Some(1.0), trials, cli.seed, &overrides)?;
            let fast = campaign(&db, 4, Some(0.2), trials, cli.seed, &overrides)?;
            checks::check_case4(&slow, &fast)
        }
    };
    Ok(report_checks(&results))
}

#[derive(Debug, Deserialize)]
struct LogRecord {
    t: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    qw: f64,
}

#[derive(Debug, Serialize)]
struct ReplayRow {
    t: f64,
    window_n: usize,
    axis_x: Option<f64>,
    axis_y: Option<f64>,
    axis_z: Option<f64>,
    rate: Option<f64>,
    sigma_rate: Option<f64>,
    error: Option<String>,
}

fn replay(cli: &Cli, log: &Path, config: Option<&Path>) -> Result<bool, CliError> {
    let cfg = match config {
        Some(p) => read_config(p)?.pipeline.unwrap_or_default(),
        None => PipelineConfig::default(),
    };
    let mut window = QuaternionWindow::new(cfg.window_capacity)?;
    let mut rows = Vec::new();
    for rec in csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(log)?.deserialize() {
        let r: LogRecord = rec?;
        let q = Quaternion::new(r.qx, r.qy, r.qz, r.qw).normalized();
        window.push(r.t, q)?;
        let mut row = ReplayRow {
            t: r.t,
            window_n: window.len(),
            axis_x: None,
            axis_y: None,
            axis_z: None,
            rate: None,
            sigma_rate: None,
            error: None,
        };
        if window.len() >= 2 {
            match quatera_estimate(&mut window, &cfg.quatera) {
                Ok(est) => {
                    let a = est.axis.as_vector();
                    row.axis_x = Some(a.x);
                    row.axis_y = Some(a.y);
                    row.axis_z = Some(a.z);
                    row.rate = Some(est.magnitude);
                    row.sigma_rate = (!est.degenerate_covariance).then(|| est.sigma_rate());
                    row.window_n = est.window_n;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        rows.push(row);
    }
    let mut out = output(cli.out.as_deref())?;
    match cli.format {
        Format::Json => serde_json::to_writer_pretty(&mut out, &rows).map_err(io::Error::other)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BuildDb { magnitude, binary } => build_db(&cli, *magnitude, *binary),
        Command::Bench { case, runs, max_spikes } => run_bench(&cli, *case, *runs, *max_spikes),
        Command::RunCase {
            case,
            trials,
            period,
            config,
            frames,
        } => run_case(&cli, *case, *trials, *period, config.as_deref(), frames.as_deref()),
        Command::Replay { log, config } => replay(&cli, log, config.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("threshold check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
