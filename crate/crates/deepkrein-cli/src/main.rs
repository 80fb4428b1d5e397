use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepkrein_cli::{run, Command, Overrides, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "deepkrein", version, about = "Deep networks as indefinite kernel machines")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Build the truncated flat representation and check it against the network.
    Flatten(Common),
    /// Assemble the Gram matrix of the network kernel.
    Kernel(Common),
    /// Train the network by gradient descent.
    TrainNet(Common),
    /// Train the equivalent indefinite SVM.
    TrainKsvm(Common),
    /// Train both and compare, with capacity bounds.
    Compare(Common),
    /// Rademacher bounds and an empirical estimate.
    Bounds(Common),
    /// Sparsity profile of the flat weights.
    Sparsity(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trunc: Option<u32>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Sub::Flatten(a) => (Command::Flatten, a),
        Sub::Kernel(a) => (Command::Kernel, a),
        Sub::TrainNet(a) => (Command::TrainNet, a),
        Sub::TrainKsvm(a) => (Command::TrainKsvm, a),
        Sub::Compare(a) => (Command::Compare, a),
        Sub::Bounds(a) => (Command::Bounds, a),
        Sub::Sparsity(a) => (Command::Sparsity, a),
    };
    let overrides = Overrides { out: args.out, seed: args.seed, trunc: args.trunc };
    match run(command, &args.config, &overrides) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
