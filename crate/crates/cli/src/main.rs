use std::path::PathBuf;
use std::process::ExitCode;

use bellrm::commands::{self, AnalyzeOptions, SimulateOptions};
use bellrm::CliResult;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bellrm", version, about = "Pulsed Bell-test simulator and randommeter")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write run.btag plus manifest.json.
    Simulate {
        #[arg(long, env = "BELLRM_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "BELLRM_OUT")]
        out: PathBuf,
        /// Overrides run.seed.
        #[arg(long, env = "BELLRM_SEED")]
        seed: Option<u64>,
        /// Also write the CSV mirror run.csv.
        #[arg(long, env = "BELLRM_CSV")]
        csv: bool,
    },
    /// Analyze a simulated run directory in place.
    Analyze {
        #[arg(long = "in", env = "BELLRM_IN")]
        input: PathBuf,
        #[arg(long, env = "BELLRM_SLICES")]
        slices: Option<u32>,
        #[arg(long = "window-ns", env = "BELLRM_WINDOW_NS")]
        window_ns: Option<u64>,
        #[arg(long = "alpha-sig", env = "BELLRM_ALPHA_SIG")]
        alpha_sig: Option<f64>,
    },
    /// Summarize analyzed runs into summary.txt and curves.csv.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Defaults to the first input directory.
        #[arg(long, env = "BELLRM_REPORT_OUT")]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, seed, csv } => {
            let m = commands::simulate_from_path(&config, &out, &SimulateOptions { seed, write_csv: csv })?;
            println!("wrote {} (seed {})", out.display(), m.seed);
        }
        Command::Analyze {
            input,
            slices,
            window_ns,
            alpha_sig,
        } => {
            let a = commands::analyze(
                &input,
                &AnalyzeOptions {
                    n_slices: slices,
                    window_ns,
                    alpha_sig,
                },
            )?;
            println!("{} coincidences, verdict {}", a.coincidences, a.verdict.label);
        }
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input[0].clone());
            print!("{}", commands::report(&input, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
