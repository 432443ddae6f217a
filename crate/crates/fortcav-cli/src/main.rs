use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fortcav_cli::{
    load_file_config, params_from_tag, run_scenario, schema_json, CliError, FitLifetimeParams,
    HeatingBudgetParams, LifetimeParams, MagicParams, RepumpParams, RunContext, ScenarioParams,
    StaircaseLevelsParams, StaircaseParams, StarkScanParams, TransmitParams, DEFAULT_SEED,
};

/// Seeded cavity-QED trap experiments emitting plot-ready CSV artifacts.
#[derive(Parser)]
#[command(name = "fortcav", version, max_term_width = 100)]
struct Cli {
    /// Master seed for every stochastic scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for emitted artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Atomic line-data file; the built-in Cs-133 levels are used if absent.
    #[arg(long, global = true)]
    atom_data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan light shifts of 6S and the 6P3/2 (F′, m_F′) manifold.
    Stark(StarkScanParams),
    /// Locate the state-insensitive (magic) trapping wavelength.
    Magic(MagicParams),
    /// Weak-drive transmission spectrum of the coupled atom–cavity system.
    Transmit(TransmitParams),
    /// Transmission plateaus for 0..=N identically coupled atoms.
    StaircaseLevels(StaircaseLevelsParams),
    /// Simulated trap-lifetime experiment with a survival-curve fit.
    Lifetime(LifetimeParams),
    /// Ground-hyperfine repumping driven by trap-light scattering.
    Repump(RepumpParams),
    /// Synthesize and/or segment a stepped photon-counting record.
    Staircase(StaircaseParams),
    /// Tabulate every heating and loss channel at one operating point.
    HeatingBudget(HeatingBudgetParams),
    /// Fit a lifetime to an existing survival CSV.
    FitLifetime(FitLifetimeParams),
    /// Run a scenario described by a JSON config file.
    Run {
        /// JSON config; `fortcav schema` prints the layout.
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the JSON config schema with per-scenario defaults.
    Schema,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        atom_data: cli.atom_data.clone(),
    };
    let params = match cli.command {
        Command::Stark(p) => ScenarioParams::StarkScan(p),
        Command::Magic(p) => ScenarioParams::Magic(p),
        Command::Transmit(p) => ScenarioParams::Transmit(p),
        Command::StaircaseLevels(p) => ScenarioParams::StaircaseLevels(p),
        Command::Lifetime(p) => ScenarioParams::Lifetime(p),
        Command::Repump(p) => ScenarioParams::Repump(p),
        Command::Staircase(p) => ScenarioParams::Staircase(p),
        Command::HeatingBudget(p) => ScenarioParams::HeatingBudget(p),
        Command::FitLifetime(p) => ScenarioParams::FitLifetime(p),
        Command::Run { config } => {
            let file = load_file_config(&config)?;
            // Command-line flags win over the file, the file over defaults.
            ctx.seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
            ctx.out = cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("."));
            ctx.atom_data = cli.atom_data.or(file.atom_data);
            let raw = file.params.unwrap_or(serde_json::Value::Object(Default::default()));
            params_from_tag(&file.scenario, raw)?
        }
        Command::Schema => {
            println!(
                "{}",
                serde_json::to_string_pretty(&schema_json()).expect("schema serializes")
            );
            return Ok(Vec::new());
        }
    };
    run_scenario(&params, &ctx)
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
