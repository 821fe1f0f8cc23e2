//! Subcommand-driven entry point for the benchmark pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use addbench::channel::Concealment;
use addbench::config::RunConfig;
use addbench::demo::{generate_demo_corpus, DemoSpec};
use addbench::pipeline::{
    self, stage_build_addc, stage_eval, stage_features, stage_report, stage_train,
};

#[derive(Parser)]
#[command(name = "addbench", version, about = "Audio deepfake detection robustness benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Rebuild outputs even when they look up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the bundled synthetic demo corpus.
    Demo {
        /// Output directory for WAV files and manifest.csv.
        #[arg(long)]
        out: PathBuf,
        /// Total utterance count, split evenly between classes.
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated source dataset tags.
        #[arg(long, default_value = "demo")]
        tags: String,
    },
    /// Degrade one WAV file through a codec and packet loss.
    Simulate {
        #[arg(long, value_name = "WAV")]
        r#in: PathBuf,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        /// Codec preset name, or "identity".
        #[arg(long)]
        codec: String,
        /// Packet loss rate in [0, 1].
        #[arg(long)]
        plr: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "zero_fill")]
        concealment: String,
    },
    /// Build the six-condition evaluation set.
    BuildAddc(ConfigArgs),
    /// Build the augmented training set.
    Augment(ConfigArgs),
    /// Extract and cache features.
    Features(ConfigArgs),
    /// Train the configured detector.
    Train(ConfigArgs),
    /// Score the evaluation set with the trained detector.
    Eval(ConfigArgs),
    /// Compute metrics from scores and write the report.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Use an externally produced score CSV instead of the eval stage
        /// output.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Print version and config digest.
    Version {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<pipeline::PipelineError> for CliError {
    fn from(e: pipeline::PipelineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<addbench::config::ConfigError> for CliError {
    fn from(e: addbench::config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::load(path)?;
    if cfg.parallelism > 0 {
        // First build wins; later calls on an existing pool are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build_global();
    }
    Ok(cfg)
}

fn parse_concealment(name: &str) -> Result<Concealment, CliError> {
    match name {
        "zero_fill" => Ok(Concealment::ZeroFill),
        "repeat_previous" => Ok(Concealment::RepeatPrevious),
        "linear_interp" => Ok(Concealment::LinearInterp),
        other => Err(CliError::Usage(format!(
            "unknown concealment {other:?}; expected zero_fill|repeat_previous|linear_interp"
        ))),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Demo {
            out,
            count,
            seed,
            tags,
        } => {
            if count < 2 {
                return Err(CliError::Usage("--count must be at least 2".into()));
            }
            let tags: Vec<String> = tags
                .split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect();
            if tags.is_empty() {
                return Err(CliError::Usage("--tags must name at least one tag".into()));
            }
            let spec = DemoSpec { count, seed, tags };
            let manifest =
                generate_demo_corpus(&out, &spec).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "demo: wrote {} utterances and {}",
                manifest.len(),
                out.join("manifest.csv").display()
            );
            Ok(())
        }
        Command::Simulate {
            r#in,
            out,
            codec,
            plr,
            seed,
            concealment,
        } => {
            if !(0.0..=1.0).contains(&plr) {
                return Err(CliError::Usage(format!("--plr {plr} outside [0, 1]")));
            }
            let spec = RunConfig::resolve_codec(&codec).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown codec {codec:?}; presets: AMR-WB, EVS, IVAS, OPUS, SpeexWB, SILK, identity"
                ))
            })?;
            let concealment = parse_concealment(&concealment)?;
            let line = pipeline::run_simulate(&r#in, &out, &spec, plr, seed, concealment)?;
            println!("{line}");
            Ok(())
        }
        Command::BuildAddc(args) => {
            let cfg = load_config(&args.config)?;
            println!("{}", stage_build_addc(&cfg, args.force)?);
            Ok(())
        }
        Command::Augment(args) => {
            let cfg = load_config(&args.config)?;
            println!("{}", pipeline::stage_augment(&cfg, args.force)?);
            Ok(())
        }
        Command::Features(args) => {
            let cfg = load_config(&args.config)?;
            let (hits, written) = stage_features(&cfg, args.force)?;
            println!("features: {hits} cache hits, {written} written");
            Ok(())
        }
        Command::Train(args) => {
            let cfg = load_config(&args.config)?;
            println!("{}", stage_train(&cfg, args.force)?);
            Ok(())
        }
        Command::Eval(args) => {
            let cfg = load_config(&args.config)?;
            println!("{}", stage_eval(&cfg, args.force)?);
            Ok(())
        }
        Command::Report { config, scores } => {
            let cfg = load_config(&config)?;
            let (report, dir) = stage_report(&cfg, scores.as_deref())?;
            print!("{}", report.to_text());
            println!("report: wrote {}", dir.join("report.json").display());
            Ok(())
        }
        Command::Version { config } => {
            println!("addbench {}", env!("CARGO_PKG_VERSION"));
            if let Some(path) = config {
                let bytes = std::fs::read(&path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                println!("config digest: sha256:{}", pipeline::sha256_hex(&bytes));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
