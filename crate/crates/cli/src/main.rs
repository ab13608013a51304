use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nebcert::game::TableKind;
use nebcert::optics::{SimConfig, SimMode};
use nebcert::sweep::{
    bound_from_tomography, report_theory_curve, run_sweep, write_report, write_theory_csv, SweepParameter, SweepSpec,
};
use nebcert::Error;

#[derive(Parser)]
#[command(
    name = "nebcert",
    version,
    about = "Non-entanglement-breaking channel certification sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a gamma or beta sweep from a JSON config and write sweep.csv and sweep.json.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print ideal-game and simulated theory curves as CSV.
    Theory {
        #[arg(long, value_enum)]
        table: Table,
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Print the EB bound for states read from a tomography CSV.
    Bound {
        #[arg(long)]
        states: PathBuf,
        #[arg(long, value_enum)]
        table: Table,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Analytic,
    Montecarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Six,
    Four,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Gamma,
    Beta,
}

impl From<Table> for TableKind {
    fn from(t: Table) -> Self {
        match t {
            Table::Six => TableKind::SixState,
            Table::Four => TableKind::FourState,
        }
    }
}

impl From<Param> for SweepParameter {
    fn from(p: Param) -> Self {
        match p {
            Param::Gamma => SweepParameter::Gamma,
            Param::Beta => SweepParameter::Beta,
        }
    }
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCONSISTENT: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InconsistentStatistics { .. } => EXIT_INCONSISTENT,
        Error::Config(_)
        | Error::Json(_)
        | Error::OutOfRange { .. }
        | Error::InvalidIntensities(_)
        | Error::InvalidTable(_)
        | Error::NonPhysical(_)
        | Error::CorruptTomography { .. }
        | Error::Csv(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn certify(config: PathBuf, out: PathBuf, mode: Option<Mode>, seed: Option<u64>) -> Result<(), Error> {
    let mut spec = SweepSpec::from_path(&config)?;
    if let Some(mode) = mode {
        spec.sim.mode = match mode {
            Mode::Analytic => SimMode::Analytic,
            Mode::Montecarlo => SimMode::MonteCarlo,
        };
    }
    if let Some(seed) = seed {
        spec.sim.seed = seed;
    }
    let report = run_sweep(&spec)?;
    let (csv, json) = write_report(&out, &spec, &report)?;
    let certified = report.rows.iter().filter(|r| r.certified).count();
    eprintln!(
        "{} points, {} certified against C_EB = {:.6}; wrote {} and {}",
        report.rows.len(),
        certified,
        report.bound.value,
        csv.display(),
        json.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Certify {
            config,
            out,
            mode,
            seed,
        } => certify(config, out, mode, seed),
        Command::Theory { table, param, values } => {
            let rows = report_theory_curve(table.into(), param.into(), &values, &SimConfig::default())?;
            write_theory_csv(&rows, std::io::stdout().lock())
        }
        Command::Bound { states, table } => {
            let result = bound_from_tomography(&states, table.into())?;
            println!("{}", result.to_json()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
