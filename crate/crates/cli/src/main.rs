use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ferroprop::model::save_model;
use ferroprop::oracle::{exact_log_z_guarded, transfer_matrix_log_z, EXACT_MAX_N};
use ferroprop::topology::{FieldSpec, Topology};
use ferroprop_cli::{
    emit_report, run_experiment, Algorithm, CliError, ExperimentConfig, InitKind, ModelSource, ReferenceSpec, Result,
};

#[derive(Parser)]
#[command(
    name = "ferroprop",
    version,
    about = "Mean-field, BP and ellipsoid experiments on ferromagnetic Ising models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file (`n`, `node`, `edge` lines)
    #[arg(long)]
    model: Option<PathBuf>,

    /// Generator: cycle:N, path:N, grid:RxC, regular:N:D, tree:N, star:N
    #[arg(long)]
    topology: Option<Topology>,

    /// Coupling on every generated edge
    #[arg(long)]
    beta: Option<f64>,

    /// Field: H (uniform), H@I (one node) or random:LO:HI
    #[arg(long)]
    field: Option<FieldSpec>,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn source(self) -> Result<ModelSource> {
        ModelSource::from_flags(self.model, self.topology, self.beta, self.field, self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model and print or save it
    Gen {
        #[command(flatten)]
        model: ModelArgs,

        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run one solver and write trace.csv, state.csv and summary.json
    Run {
        #[command(flatten)]
        model: ModelArgs,

        #[arg(long, value_enum)]
        algo: Algorithm,

        #[arg(long, value_enum, default_value = "ones")]
        init: InitKind,

        /// Iteration cap for mf and bp
        #[arg(long, default_value_t = 1000)]
        steps: usize,

        /// Stop once the sup-norm step falls below this; 0 runs every step
        #[arg(long, default_value_t = 0.0)]
        tol: f64,

        /// Target accuracy of the ellipsoid solvers
        #[arg(long)]
        eps: Option<f64>,

        /// Limit value for residuals: none, long, ellipsoid, exact or a number
        #[arg(long = "ref", default_value = "none")]
        reference: ReferenceSpec,

        #[arg(long, default_value_t = EXACT_MAX_N)]
        exact_max_n: usize,

        /// Output directory
        #[arg(long)]
        out: PathBuf,

        /// Also write SVG plots
        #[arg(long)]
        plot: bool,
    },

    /// Compute log Z by enumeration or transfer matrices
    Exact {
        #[command(flatten)]
        model: ModelArgs,

        #[arg(long, value_enum, default_value = "exact")]
        algo: Algorithm,

        #[arg(long, default_value_t = EXACT_MAX_N)]
        exact_max_n: usize,

        /// Write log Z and marginals as CSV to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Combine traces of one model into a residual table and check matrix
    Report {
        /// Trace files written by `run`
        traces: Vec<PathBuf>,

        /// Override a trace's reference, as LABEL=VALUE (label is the algorithm)
        #[arg(long = "reference")]
        references: Vec<String>,

        #[arg(long)]
        out: PathBuf,

        #[arg(long)]
        plot: bool,
    },
}

fn parse_reference(s: &str) -> Result<(String, f64)> {
    let (label, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::invalid(format!("expected LABEL=VALUE, got `{s}`")))?;
    let value: f64 = value
        .parse()
        .map_err(|_| CliError::invalid(format!("bad reference value `{value}`")))?;
    Ok((label.to_string(), value))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { model, out } => {
            let m = model.source()?.load()?;
            let text = save_model(&m);
            match out {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
                    println!(
                        "wrote {} (n = {}, m = {}, hash {})",
                        path.display(),
                        m.n(),
                        m.m(),
                        m.content_hash()
                    );
                }
                None => print!("{text}"),
            }
        }
        Command::Run {
            model,
            algo,
            init,
            steps,
            tol,
            eps,
            reference,
            exact_max_n,
            out,
            plot,
        } => {
            let cfg = ExperimentConfig {
                init,
                max_steps: steps,
                tol,
                epsilon: eps,
                reference,
                exact_max_n,
                plot,
                ..ExperimentConfig::new(model.source()?, algo, out)
            };
            let s = run_experiment(&cfg)?;
            println!(
                "{} objective {:.12e} after {} steps",
                s.algorithm, s.final_objective, s.steps
            );
            if let (Some(r), Some(gap)) = (s.reference, s.reference_gap) {
                println!("reference {r:.12e}, gap {gap:.3e}");
            }
            println!("wrote {} to {}", s.files.join(", "), cfg.out.display());
        }
        Command::Exact {
            model,
            algo,
            exact_max_n,
            out,
        } => {
            let m = model.source()?.load()?;
            let (log_z, csv) = match algo {
                Algorithm::Exact => {
                    let r = exact_log_z_guarded(&m, exact_max_n)?;
                    let csv = r.to_csv(&m);
                    (r.log_z, csv)
                }
                Algorithm::TransferMatrix => {
                    let v = transfer_matrix_log_z(&m)?;
                    (v, format!("log_z\n{v:.17e}\n"))
                }
                other => {
                    return Err(CliError::invalid(format!(
                        "exact takes --algo exact or transfer_matrix, not {other}"
                    )))
                }
            };
            println!("log_z = {log_z:.15e}");
            if let Some(path) = out {
                std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
            }
        }
        Command::Report {
            traces,
            references,
            out,
            plot,
        } => {
            let references = references
                .iter()
                .map(|s| parse_reference(s))
                .collect::<Result<Vec<_>>>()?;
            let s = emit_report(&traces, &references, &out, plot)?;
            println!("{} rows written to {}", s.rows, out.display());
            for f in &s.failures {
                eprintln!("check failed: {f}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
