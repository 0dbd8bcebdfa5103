use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cyclone_core::artifact::load_models;
use cyclone_core::config::RunConfig;
use cyclone_core::hurdat2::{export_csv, import_csv, parse_path, StormId, StormTrack};
use cyclone_core::pipeline::{forecast_next, DistanceMethod, ForecastMode};
use cyclone_core::preprocess::{clean, CleanOptions};
use cyclone_core::workflow::{case_study, case_text, find_storm, train, write_case_outputs, write_train_outputs};
use cyclone_core::Error;

#[derive(Parser)]
#[command(name = "cyclone", version, about = "Best-track parsing and two-stage cyclone forecasting")]
struct Cli {
    /// Worker thread cap for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    atlantic: Option<PathBuf>,
    #[arg(long)]
    pacific: Option<PathBuf>,
    /// Output directory; defaults to ./runs/<timestamp>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a HURDAT2 file and print storm and point counts.
    Parse {
        file: PathBuf,
        #[arg(long)]
        export_csv: Option<PathBuf>,
    },
    /// Train all models and write artifacts plus an evaluation report.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forecast one storm step by step and compare with its track.
    CaseStudy {
        #[arg(long)]
        storm: StormId,
        #[command(flatten)]
        data: DataArgs,
        /// Model directory; defaults to <out>/models from the config.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Feed each forecast into the next window.
        #[arg(long)]
        rollout: bool,
        /// Great-circle instead of equirectangular track error.
        #[arg(long)]
        haversine: bool,
    },
    /// Forecast the step after a track prefix given as CSV.
    Predict {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Storm to use when the CSV holds several.
        #[arg(long)]
        storm: Option<StormId>,
    },
}

/// Exit status 2 marks usage and configuration problems, 1 everything else.
struct Failure {
    code: u8,
    error: Error,
}

fn usage(error: Error) -> Failure {
    Failure { code: 2, error }
}

fn runtime(error: Error) -> Failure {
    let code = match error {
        Error::InvalidConfig(_) | Error::UnknownStorm(_) => 2,
        _ => 1,
    };
    Failure { code, error }
}

fn load_config(data: &DataArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &data.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    if data.atlantic.is_some() || data.pacific.is_some() {
        cfg.atlantic = data.atlantic.clone();
        cfg.pacific = data.pacific.clone();
    }
    if data.out.is_some() {
        cfg.out = data.out.clone();
    }
    Ok(cfg)
}

fn default_out() -> PathBuf {
    let now = chrono::DateTime::<chrono::Utc>::from(std::time::SystemTime::now());
    Path::new("runs").join(now.format("%Y%m%d-%H%M%S").to_string())
}

fn load_tracks(cfg: &RunConfig) -> Result<Vec<StormTrack>, Failure> {
    let mut tracks = Vec::new();
    for path in cfg.dataset_paths().map_err(usage)? {
        let parsed = parse_path(&path).map_err(|e| {
            usage(Error::InvalidConfig(format!("{}: {e}", path.display())))
        })?;
        log::info!("{}: {} storms", path.display(), parsed.len());
        tracks.extend(parsed);
    }
    Ok(tracks)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Parse { file, export_csv: csv } => {
            let tracks = parse_path(&file).map_err(|e| usage(Error::InvalidConfig(format!("{}: {e}", file.display()))))?;
            let points: usize = tracks.iter().map(|t| t.points.len()).sum();
            println!("{} storms, {} points", tracks.len(), points);
            if let Some(path) = csv {
                let f = std::fs::File::create(&path).map_err(|e| runtime(e.into()))?;
                export_csv(&tracks, f).map_err(runtime)?;
            }
        }
        Command::Train { data, seed } => {
            let mut cfg = load_config(&data)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            cfg.validate().map_err(usage)?;
            let out = cfg.out.clone().unwrap_or_else(default_out);
            cfg.out = Some(out.clone());
            let tracks = load_tracks(&cfg)?;
            let trained = train(&cfg, &tracks).map_err(runtime)?;
            write_train_outputs(&out, &trained, &cfg).map_err(runtime)?;
            print!("{}", trained.report.to_text());
            println!("\nwrote {}", out.display());
        }
        Command::CaseStudy {
            storm,
            data,
            artifact,
            rollout,
            haversine,
        } => {
            let cfg = load_config(&data)?;
            let artifact = match (artifact, &cfg.out) {
                (Some(a), _) => a,
                (None, Some(out)) => out.join("models"),
                (None, None) => {
                    return Err(usage(Error::InvalidConfig(
                        "pass --artifact or set out in the config".into(),
                    )))
                }
            };
            let models = load_models(&artifact).map_err(runtime)?;
            let tracks = load_tracks(&cfg)?;
            let storm = find_storm(&tracks, storm, cfg.clean).map_err(runtime)?;
            let mode = if rollout { ForecastMode::Rollout } else { ForecastMode::OneStep };
            let distance = if haversine { DistanceMethod::Haversine } else { DistanceMethod::Equirectangular };
            let report = case_study(&models, &storm, mode, distance).map_err(runtime)?;
            let out = data.out.unwrap_or_else(default_out).join(format!("case_{}", report.storm_id));
            write_case_outputs(&out, &report).map_err(runtime)?;
            print!("{}", case_text(&report));
            println!("\nwrote {}", out.display());
        }
        Command::Predict { artifact, input, storm } => {
            let models = load_models(&artifact).map_err(runtime)?;
            let f = std::fs::File::open(&input)
                .map_err(|e| usage(Error::InvalidConfig(format!("{}: {e}", input.display()))))?;
            let tracks = import_csv(f).map_err(usage)?;
            let track = match storm {
                Some(id) => tracks.iter().find(|t| t.id() == id).ok_or_else(|| usage(Error::UnknownStorm(id.to_string())))?,
                None => tracks.first().ok_or_else(|| usage(Error::InvalidConfig("input holds no track points".into())))?,
            };
            let opts = CleanOptions { min_points: 1, ..CleanOptions::default() };
            let cleaned = clean(std::slice::from_ref(track), opts)
                .pop()
                .ok_or_else(|| usage(Error::InvalidConfig("prefix has no usable observations".into())))?;
            let scaled = models.scalers.apply_storm(&cleaned);
            let step = forecast_next(&models, &scaled).map_err(usage)?;
            let json = serde_json::to_string_pretty(&step).map_err(|e| runtime(e.into()))?;
            println!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
