use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use modal_sos_cli::commands::{self, MethodSel, MultistartConfig, SimulateConfig, UpdateConfig};
use modal_sos_cli::reproduce::reproduce;

#[derive(Parser)]
#[command(name = "modal-sos", version, about = "Global model updating of shear frames by sum-of-squares relaxation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sos,
    GaussNewton,
    TrustRegion,
    All,
}

impl From<MethodArg> for MethodSel {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sos => MethodSel::Sos,
            MethodArg::GaussNewton => MethodSel::GaussNewton,
            MethodArg::TrustRegion => MethodSel::TrustRegion,
            MethodArg::All => MethodSel::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write modal data from a forward eigen-analysis of the model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Measured floors, 1-based; overrides the model file.
        #[arg(long, value_delimiter = ',')]
        measured_dofs: Option<Vec<usize>>,
        /// Number of modes; overrides the model file.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Update the model against modal data.
    Update {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        modal_data: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        /// Allowed gap between the objective at the extracted point and the bound.
        #[arg(long)]
        tol_cert: Option<f64>,
    },
    /// Run local solvers from uniformly random starts in the box.
    Multistart {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        modal_data: PathBuf,
        #[arg(long, value_enum, default_value = "gauss-newton")]
        method: MethodArg,
        #[arg(long, default_value_t = 100)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also solve the relaxation and count starts reaching its bound.
        #[arg(long)]
        certify: bool,
        #[arg(long)]
        tol_cert: Option<f64>,
    },
    /// Regenerate a built-in case: table1, eq6-fixture, table3-freqs or fig3-grid.
    Reproduce {
        case: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tol_cert: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { model, out, measured_dofs, modes } => commands::simulate(&SimulateConfig {
            model,
            out,
            measured_dofs,
            n_modes: modes,
        }),
        Command::Update { model, modal_data, method, out, tol_cert } => commands::update(&UpdateConfig {
            model,
            modal_data,
            method: method.into(),
            out,
            tol_cert,
        }),
        Command::Multistart { model, modal_data, method, starts, seed, out, certify, tol_cert } => {
            commands::multistart(&MultistartConfig {
                model,
                modal_data,
                method: method.into(),
                starts,
                seed,
                out,
                certify,
                tol_cert,
            })
        }
        Command::Reproduce { case, out, tol_cert } => reproduce(&case, &out, tol_cert),
    };
    match result {
        Ok(outcome) => {
            print!("{outcome}");
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("run finished without an optimal/converged status");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
