use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wep_core::pipeline::{self, RawOverride};
use wep_core::config::ConfigError;
use wep_core::{budget, Error, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "wep", version, about = "Dual-species free-fall comparison: simulate, analyze, budget")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "WEP_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed; overrides the configuration's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Budget file (defaults to the shipped table).
    #[arg(long, global = true)]
    budget: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a campaign and write shots, fits and the η series.
    Simulate,
    /// Fit a shot CSV and compute the η series and Allan curve.
    Analyze {
        /// Shot CSV produced by `simulate`.
        shots: PathBuf,
    },
    /// Combine an error budget.
    Budget {
        /// Raw η in units of 1e-10; replaces the file's raw row.
        #[arg(long, requires = "raw_uncertainty", allow_negative_numbers = true)]
        raw_value: Option<f64>,
        /// Raw η uncertainty in units of 1e-10.
        #[arg(long, requires = "raw_value")]
        raw_uncertainty: Option<f64>,
    },
    /// Simulate, analyze and combine with the budget.
    E2e,
    /// Print the species table.
    Species,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => match cli.seed {
            Some(seed) => RunConfig::with_seed(seed),
            None => {
                return Err(ConfigError::Invalid {
                    origin: "command line".into(),
                    field: "seed".into(),
                    message: "no configuration given: pass --config (or WEP_CONFIG) or --seed".into(),
                }
                .into())
            }
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate("config")?;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let out = pipeline::run_simulate(&cfg)?;
            let summary = out.analysis.summary_json();
            match cli.format {
                Format::Json => print_json(&summary),
                Format::Text => {
                    println!(
                        "{} shots in {} ellipses written to {}",
                        out.groups.iter().map(|g| g.shots.len()).sum::<usize>(),
                        out.groups.len(),
                        cfg.output_dir.display()
                    );
                    println!(
                        "mean raw η = {:.6e}, corrected η = {:.6e}, statistical σ = {:.3e}",
                        out.analysis.mean_eta_raw,
                        out.analysis.mean_eta_corrected,
                        out.analysis.statistical_uncertainty
                    );
                }
            }
        }
        Command::Analyze { shots } => {
            let cfg = load_config(cli)?;
            let analysis = pipeline::run_analyze(shots, &cfg)?;
            match cli.format {
                Format::Json => print_json(&analysis.summary_json()),
                Format::Text => {
                    println!("{:>12}  {:>14}  {:>10}", "tau_s", "adev", "clusters");
                    for p in &analysis.allan {
                        println!("{:>12.1}  {:>14.6e}  {:>10}", p.tau, p.deviation, p.n_clusters);
                    }
                    if let Some(s) = analysis.slope {
                        println!("slope: σ(τ) = {:.4e} · τ^{:.4}", s.coefficient, s.exponent);
                    }
                    println!(
                        "mean corrected η = {:.6e} ± {:.3e}",
                        analysis.mean_eta_corrected, analysis.statistical_uncertainty
                    );
                    if !analysis.failed.is_empty() {
                        println!("{} ellipses could not be fitted", analysis.failed.len());
                    }
                }
            }
        }
        Command::Budget {
            raw_value,
            raw_uncertainty,
        } => {
            let raw = match (raw_value, raw_uncertainty) {
                (Some(v), Some(u)) => Some(RawOverride {
                    value: v * budget::E10,
                    uncertainty: u * budget::E10,
                }),
                _ => None,
            };
            let estimate = pipeline::run_budget(cli.budget.as_deref(), raw)?;
            match cli.format {
                Format::Json => print_json(&estimate.json_report()),
                Format::Text => print!("{}", estimate.text_report()),
            }
        }
        Command::E2e => {
            let cfg = load_config(cli)?;
            let out = pipeline::run_e2e(&cfg, cli.budget.as_deref())?;
            match cli.format {
                Format::Json => print_json(&out.estimate.json_report()),
                Format::Text => print!("{}", out.estimate.text_report()),
            }
        }
        Command::Species => {
            let table = match &cli.config {
                Some(path) => RunConfig::load(path)?.species_table()?,
                None => wep_core::physics::SpeciesTable::builtin(),
            };
            match cli.format {
                Format::Json => print_json(&serde_json::to_value(&table.states).expect("serialisable")),
                Format::Text => {
                    println!(
                        "{:<8} {:>2} {:>24} {:>24} {:>20}",
                        "isotope", "F", "mass_kg", "hyperfine_energy_J", "k_eff_rad_per_m"
                    );
                    for r in &table.states {
                        println!(
                            "{:<8} {:>2} {:>24e} {:>24e} {:>20}",
                            r.isotope, r.f, r.mass_kg, r.hyperfine_energy_j, r.k_eff_rad_per_m
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
