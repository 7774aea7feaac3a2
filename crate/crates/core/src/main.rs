use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ttpc::criteria::{default_audit, GainPlan};
use ttpc::experiment::config::ExperimentConfig;
use ttpc::experiment::records::read_records_file;
use ttpc::experiment::report::{create, write_json, write_table_csv};
use ttpc::experiment::{self, FitOptions};
use ttpc::Result;

#[derive(Parser)]
#[command(
    name = "ttpc",
    version,
    about = "Four-mode continuous-variable entanglement: simulation, criteria and data reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the state from a config and evaluate the inseparability criteria
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// JSON report path; overrides `outputs.json`
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Comparison table path; overrides `outputs.csv`
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate the criteria from six measured noise powers
    FromMeasurements {
        data: PathBuf,
        /// Electronic gain applied to every slot
        #[arg(long)]
        gain: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the bundled measurements and theory with the published numbers
    ReproducePaper {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit squeezing and a uniform transmittance to six measured noise powers
    Fit {
        data: PathBuf,
        /// Hold the transmittance fixed and fit the squeezing only
        #[arg(long)]
        fix_eta: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo homodyne sampling of the criterion terms
    Mc {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `mc.seed`; one of the two is required
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check the closed-form term variances against the covariance matrix
    AuditEq6 {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, output, csv } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output.is_some() {
                cfg.outputs.json = output;
            }
            if csv.is_some() {
                cfg.outputs.csv = csv;
            }
            let report = experiment::simulate(&cfg)?;
            experiment::write_simulate_outputs(&report)?;
            println!("{report}");
        }
        Command::FromMeasurements { data, gain, output } => {
            let report = experiment::from_measurements(&read_records_file(&data)?, &GainPlan::uniform(gain))?;
            if let Some(p) = output {
                write_json(&p, &report)?;
            }
            println!("{report}");
        }
        Command::ReproducePaper { output, csv } => {
            let report = experiment::reproduce_published()?;
            if let Some(p) = output {
                write_json(&p, &report)?;
            }
            if let Some(p) = csv {
                write_table_csv(create(&p)?, &report.rows)?;
            }
            println!("{report}");
        }
        Command::Fit { data, fix_eta, output } => {
            let res = experiment::fit(&read_records_file(&data)?, FitOptions { fix_eta })?;
            if let Some(p) = output {
                write_json(&p, &res)?;
            }
            println!("r = {:.5}, eta = {:.5}, sum of squared residuals = {:.6e} dB^2", res.r, res.eta, res.sum_sq);
            println!("residuals (dB): {}", res.residuals_db.map(|r| format!("{r:+.4}")).join(" "));
            println!("fitted optimal gain g_x1 = {:.6}", res.gains.per_criterion[0].gx1);
            if let Some(w) = &res.warning {
                println!("warning: {w}");
            }
        }
        Command::Mc { config, seed, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output.is_some() {
                cfg.outputs.json = output;
            }
            println!("{}", experiment::mc(&cfg, seed)?);
        }
        Command::AuditEq6 { output } => {
            let audit = default_audit()?;
            if let Some(p) = output {
                write_json(&p, &audit)?;
            }
            for line in &audit.lines {
                print!(
                    "line {} ({}): {:?}, max relative deviation {:.3e}",
                    line.line, line.term, line.status, line.max_rel_deviation
                );
                match line.gap_rel_error {
                    Some(gap) => println!(", gap matches (3/2)e^(-2r) to {gap:.3e}"),
                    None => println!(),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
