use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use evcharge::commands::{self, GenerateSpec};
use evcharge::config::{RunConfig, Settings};
use evcharge::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "evcharge",
    version,
    about = "Predictive EV workplace-charging simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios and write traces, metrics and cumulative curves.
    Simulate(RunArgs),
    /// Run two or more scenarios side by side and write comparison.csv.
    Compare(RunArgs),
    /// Fit the predictor on the session history and dump it as JSON.
    Fit(RunArgs),
    /// Write a synthetic session corpus.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file with the same keys as the flags (`scenarios` is a list).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl RunArgs {
    fn resolve(self) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        RunConfig::resolve(self.settings.over(file))
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = evcharge::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 28)]
    days: usize,
    /// First day, YYYY-MM-DD.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Expected weekday arrivals.
    #[arg(long)]
    daily_mean: Option<f64>,
    /// Weekend arrival rate relative to weekdays.
    #[arg(long)]
    weekend_scale: Option<f64>,
    /// Mean lateness of announced departures, minutes.
    #[arg(long, allow_negative_numbers = true)]
    stated_bias_min: Option<f64>,
    /// Spread of announced departures, minutes.
    #[arg(long)]
    stated_sd_min: Option<f64>,
    #[arg(long)]
    cycle_min: Option<u32>,
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let mut spec = GenerateSpec {
        seed: a.seed,
        days: a.days,
        ..GenerateSpec::default()
    };
    if let Some(d) = a.start {
        spec.start = d;
    }
    if let Some(m) = a.daily_mean {
        spec.profile = commands::with_daily_mean(spec.profile, m);
    }
    if let Some(s) = a.weekend_scale {
        spec.profile.weekend_scale = s;
    }
    if let Some(b) = a.stated_bias_min {
        spec.profile.stated_bias_minutes = b;
    }
    if let Some(s) = a.stated_sd_min {
        spec.profile.stated_sd_minutes = s;
    }
    if let Some(c) = a.cycle_min {
        spec.cycle_minutes = c;
    }
    let n = commands::generate(&spec, &a.out)?;
    println!("wrote {n} sessions to {}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = a.resolve()?;
            let runs = commands::simulate(&cfg)?;
            print!("{}", commands::summary_table(&runs));
            println!("results in {}", cfg.out.display());
        }
        Command::Compare(a) => {
            let cfg = a.resolve()?;
            let runs = commands::compare(&cfg)?;
            print!("{}", commands::summary_table(&runs));
            println!("comparison in {}", cfg.out.join("comparison.csv").display());
        }
        Command::Fit(a) => {
            let cfg = a.resolve()?;
            let (dump, path) = commands::fit(&cfg)?;
            println!(
                "fitted on {} sessions over {} days",
                dump.sessions, dump.days
            );
            for (name, fitted) in [("weekday", &dump.weekday), ("weekend", &dump.weekend)] {
                match fitted {
                    Some(f) => println!(
                        "{name}: initial arrival estimate {:.3}",
                        f.initial_daily_count
                    ),
                    None => println!("{name}: no days of this type in the history"),
                }
            }
            println!("model in {}", path.display());
        }
        Command::Generate(a) => generate(a)?,
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("see `evcharge --help`");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
