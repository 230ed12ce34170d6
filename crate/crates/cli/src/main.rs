use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lidarloc_cli::{cmd_ablate, cmd_evaluate, cmd_localize, cmd_simulate, CliError, Common, Settings, Variant};

#[derive(Parser)]
#[command(name = "lidarloc", version, about = "2D lidar localization and mapping for indoor UAVs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// RNG seed (simulate uses `lidar.seed` from the config when absent).
    #[arg(long)]
    seed: Option<u64>,
    /// TOML settings file; `LIDARLOC_<SECTION>__<KEY>` variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (`evaluate`: report file).
    #[arg(long)]
    out: PathBuf,
}

impl CommonArgs {
    fn common(&self) -> Common {
        Common { config: self.config.clone(), seed: self.seed, out: self.out.clone() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scan log and ground truth.
    Simulate {
        /// Preset (room, church, forest, tunnel) or TOML world file.
        #[arg(long, default_value = "church")]
        world: String,
        /// `loop`, `hover`, or a TOML trajectory file.
        #[arg(long, default_value = "loop")]
        trajectory: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the localization pipeline over a scan log.
    Localize {
        #[arg(long)]
        log: PathBuf,
        /// Preloaded map (`.xyz` ASCII or `.bin`).
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare an estimated trajectory with ground truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Map point cloud for the mean map entropy.
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Localize with each matcher variant and tabulate the metrics.
    Ablate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated subset, e.g. `closest-only,+frmsd`.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { world, trajectory, common } => {
            let settings = Settings::load(common.config.as_deref())?;
            let m = cmd_simulate(&common.common(), &settings, &world, &trajectory)?;
            println!("simulated {} scans into {}", m.counts.get("scans").copied().unwrap_or(0), common.out.display());
        }
        Command::Localize { log, map, common } => {
            let settings = Settings::load(common.config.as_deref())?;
            let m = cmd_localize(&common.common(), &settings, &log, map.as_deref())?;
            let c = |k: &str| m.counts.get(k).copied().unwrap_or(0);
            println!(
                "localized {} scans ({} fused, {} skipped, {} global matches) into {}",
                c("scans"),
                c("scans_fused"),
                c("scans_skipped"),
                c("global_accepted"),
                common.out.display()
            );
        }
        Command::Evaluate { estimate, truth, map, common } => {
            let settings = Settings::load(common.config.as_deref())?;
            let (_, metrics) = cmd_evaluate(&common.common(), &settings, &estimate, &truth, map.as_deref())?;
            print!("{}", metrics.to_report());
        }
        Command::Ablate { log, truth, variants, common } => {
            let settings = Settings::load(common.config.as_deref())?;
            let variants = variants.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>, _>>()?;
            let (_, rows) = cmd_ablate(&common.common(), &settings, &log, &truth, &variants)?;
            println!("{}", lidarloc_cli::ablation::CSV_HEADER);
            for r in rows {
                println!("{}", r.to_csv());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lidarloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
