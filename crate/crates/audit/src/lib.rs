//! Orchestration of valence bias audits over VEMB embedding files.
//!
//! The library exposes one function per subcommand so that the pipeline can
//! be driven from tests as well as from the `valence-audit` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_bias_tests, cmd_gen_contexts, cmd_learn_direction, cmd_rank, cmd_valnorm, CommandOutput,
};
pub use config::AuditConfig;
pub use error::AuditError;

#[derive(Debug, Parser)]
#[command(name = "valence-audit", version, about = "Valence bias audits for contextualized embeddings")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn the max-margin valence direction per layer.
    LearnDirection(AuditConfig),
    /// Layer-wise ValNorm, projection vs. cosine.
    Valnorm(AuditConfig),
    /// Export combination or permutation contexts.
    GenContexts(AuditConfig),
    /// Differential SC-WEAT for every bias pair.
    BiasTests(AuditConfig),
    /// Top/bottom fraction category analysis over permutation contexts.
    Rank(AuditConfig),
}

/// Parses arguments, merges the config file, and runs the chosen command.
pub fn run<I, T>(args: I) -> Result<CommandOutput, AuditError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| AuditError::input(e.to_string()))?;
    execute(cli)
}

type Handler = fn(&AuditConfig) -> Result<CommandOutput, AuditError>;

/// Merges the config file under the command's flags and runs the command.
pub fn execute(cli: Cli) -> Result<CommandOutput, AuditError> {
    let base = match &cli.config {
        Some(path) => AuditConfig::from_toml_file(path)?,
        None => AuditConfig::default(),
    };
    let (flags, cmd): (AuditConfig, Handler) = match cli.command {
        Command::LearnDirection(c) => (c, cmd_learn_direction),
        Command::Valnorm(c) => (c, cmd_valnorm),
        Command::GenContexts(c) => (c, cmd_gen_contexts),
        Command::BiasTests(c) => (c, cmd_bias_tests),
        Command::Rank(c) => (c, cmd_rank),
    };
    cmd(&base.overlay(flags))
}
