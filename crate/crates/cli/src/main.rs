//! `coatprint` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coatprint", version, about = "Stripe-pattern minutiae descriptors, virtual coats and Re-ID sweeps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an augmented minutiae library from seed patches.
    SeedLibrary(SeedLibraryArgs),
    /// Write augmented variants of one annotated patch.
    Augment(AugmentArgs),
    /// Generate virtual identities: textures, captures and a manifest.
    Synth(SynthArgs),
    /// Print the descriptor text and prose for a sequence annotation file.
    Encode(EncodeArgs),
    /// Parse descriptor text into a sequence annotation (JSON).
    Decode(DecodeArgs),
    /// Rank gallery identities for descriptor queries.
    Match(MatchArgs),
    /// Run evaluation sweeps from a plan file.
    Eval(EvalArgs),
    /// Evaluate a retrieval loss on a JSON batch.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct SeedLibraryArgs {
    /// Output directory for the library patches.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of annotated seed patches; built-in seeds when omitted.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub per_seed: usize,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Annotated patch (PNG with a JSON sidecar of the same stem).
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub ids: usize,
    /// Views per identity; the configured value when omitted.
    #[arg(long)]
    pub views: Option<usize>,
    /// Library directory; overrides the configured path.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Output directory; overrides the configured path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// JSON sequence annotation, as printed by `decode`.
    pub annotation: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub text: String,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    pub side: SideArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Gallery manifest; every distinct text of an id is enrolled.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Query manifest; every row is a query.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub queries: Option<PathBuf>,
    /// A single descriptor text to rank.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Ranking trace (JSON lines); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment plan (TOML).
    pub plan: PathBuf,
    /// Run directory; overrides the configured output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// List the cell grid without running it.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossKind {
    Triplet,
    Itc,
    Id,
    Total,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: LossKind,
    /// JSON batch; see the README for the expected fields.
    pub input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
