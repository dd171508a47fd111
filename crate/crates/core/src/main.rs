use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hqrn::experiment::{exit_code, load_config, run, Report, Task};
use hqrn::HqrnError;

#[derive(Parser)]
#[command(name = "hqrn", version, about = "Hybrid quantum residual network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the digit classifier and evaluate its reconstructed quantum version.
    Digits(RunArgs),
    /// Train QRB stacks and heads for entanglement classification.
    Entangle(RunArgs),
    /// Run the equivalence and reconstruction property suites.
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(task: Task, args: RunArgs) -> hqrn::Result<Report> {
    let cfg = load_config(&args.config)?.with_overrides(args.seed, args.out);
    if cfg.task() != task {
        return Err(HqrnError::Config(format!(
            "config is for {:?}, not {:?}",
            cfg.task(),
            task
        )));
    }
    let out = cfg.output_dir();
    let report = run(&cfg)?;
    println!("{}", out.join("report.json").display());
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Digits(a) => (Task::Digits, a),
        Command::Entangle(a) => (Task::Entanglement, a),
        Command::Verify(a) => (Task::EquivalenceSuite, a),
    };
    match execute(task, args) {
        Ok(Report::EquivalenceSuite(r)) if !r.all_passed => {
            log::warn!("some verification suites failed; see report.json");
            ExitCode::SUCCESS
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
