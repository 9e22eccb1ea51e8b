use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drosc::pcd::PcdConfig;
use drosc_cli::commands::{
    cmd_certify, cmd_run, cmd_solve_lcp, cmd_sweep, cmd_transport, render, resolve_config, Overrides,
};
use drosc_cli::{resolve_jobs, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "drosc", version, about = "Distributionally robust complementarity solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an LCP given as {"M": rows, "q": [...]}, optionally regularized by eps.
    SolveLcp {
        input: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the alternating method once and write state.json and certificate.json.
    Run(ExperimentArgs),
    /// Run every (eps, k, eta) triple and write sweep.csv.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Worker threads; DROSC_JOBS takes precedence.
        #[arg(long)]
        jobs: Option<usize>,
        /// Fill the seconds column (makes the table nondeterministic).
        #[arg(long)]
        timings: bool,
    },
    /// Recompute the certificate of a saved state.json from scratch.
    Certify {
        state: PathBuf,
        /// Write the certificate here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wasserstein distance between two distribution CSVs, or the discretization bound for a k-point grid.
    Transport {
        p: PathBuf,
        q: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Experiment config whose model domain defines the grid.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated list replacing eps_list.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory replacing output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(self) -> CliResult<ExperimentConfig> {
        let overrides = Overrides {
            eps: self.eps,
            k: self.k,
            eta: self.eta,
            seed: self.seed,
            out: self.out,
        };
        resolve_config(self.config.as_deref(), &overrides)
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(path) => drosc::minimax::write_atomic(path, text.as_bytes()).map_err(CliError::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SolveLcp { input, eps, out } => {
            let (report, ok) = cmd_solve_lcp(&input, eps)?;
            emit(&render(&report)?, out.as_ref())?;
            if !ok {
                return Err(CliError::Solve(format!("residual {:.3e} above tolerance", report.residual)));
            }
            Ok(())
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let outcome = cmd_run(&cfg)?;
            let s = &outcome.record.state;
            println!(
                "status {:?}, value {:.6e}, res_x {:.3e}, class {}, artifacts in {}",
                s.status,
                s.max_value,
                s.residual_x,
                outcome.certificate.klass,
                outcome.dir.display()
            );
            Ok(())
        }
        Command::Sweep { exp, jobs, timings } => {
            let cfg = exp.resolve()?;
            let (_, csv) = cmd_sweep(&cfg, resolve_jobs(jobs), timings)?;
            print!("{csv}");
            Ok(())
        }
        Command::Certify { state, out } => {
            let cert = cmd_certify(&state)?;
            emit(&render(&cert)?, out.as_ref())?;
            if !cert.passed {
                return Err(CliError::Solve("certificate did not pass".into()));
            }
            Ok(())
        }
        Command::Transport { p, q, k, config } => {
            let model = match config {
                Some(path) => ExperimentConfig::load(&path)?.model,
                None => PcdConfig::default(),
            };
            let report = cmd_transport(&p, q.as_deref(), k, &model)?;
            print!("{}", render(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drosc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
