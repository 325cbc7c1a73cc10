mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "cadseq", version, about = "Encode, compile, sample and evaluate sketch-extrude CAD programs")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML file with default parameters; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; falls back to the config file, then CADSEQ_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Program JSON to hierarchical tokens.
    Encode(commands::EncodeArgs),
    /// Hierarchical tokens back to a program.
    Decode(commands::DecodeArgs),
    /// Compile a program and export mesh, STEP skeleton and history.
    Compile(commands::CompileArgs),
    /// Sample points with normals on the compiled surface.
    Sample(commands::SampleArgs),
    /// Score a point cloud and resample it.
    Resample(commands::ResampleArgs),
    /// Train one level's codebook from programs or feature matrices.
    TrainCodebook(commands::TrainCodebookArgs),
    /// Sample token lattices by discrete diffusion.
    Diffuse(commands::DiffuseArgs),
    /// Run the metric battery over a manifest of program pairs.
    Eval(commands::EvalArgs),
    /// Encode, decode and recompile every program in a directory.
    Roundtrip(commands::RoundtripArgs),
    /// Contrastive loss and gradients between two embedding matrices.
    Align(commands::AlignArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut cfg = match RunConfig::load(cli.global.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli, &mut cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
