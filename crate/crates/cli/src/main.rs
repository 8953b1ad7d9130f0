//! `mdhc`: drive the bank, customers and vendors through files in one
//! directory, run scenario scripts, and measure chain traversal costs.
//!
//! Exit status: 0 on success (including rejections a scenario expected),
//! 1 when a protocol check fails, 2 on bad usage or unreadable files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdhc::{Profile, Seed};

#[derive(Parser)]
#[command(name = "mdhc", version, about = "Multi-dimensional hash chain micropayments")]
struct Cli {
    /// Parameter size.
    #[arg(long, global = true, value_enum, default_value = "toy")]
    profile: ProfileArg,

    /// Hex seed; without one a fresh seed is drawn and printed to stderr.
    #[arg(long, global = true, value_parser = parse_seed)]
    seed: Option<Seed>,

    /// Directory holding params, batches, wallets and the ledger.
    #[arg(long, global = true, default_value = ".")]
    dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Toy,
    Demo,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Toy => Profile::TOY,
            ProfileArg::Demo => Profile::DEMO,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    S1,
    S2,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the bank's modulus and exponents.
    Params(ParamsArgs),
    /// Mint a batch of coins (s1) or coin chains (s2) for a customer.
    Mint(MintArgs),
    /// Hand the customer's next coin to a vendor.
    Pay(PayArgs),
    /// Check the coins waiting in a vendor's wallet.
    Verify(VerifyArgs),
    /// Deposit a vendor's accepted coins at the bank.
    Redeem(RedeemArgs),
    /// Run a scenario script and print its trace.
    Scenario(ScenarioArgs),
    /// Measure storage and per-node cost of a traversal strategy.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct ParamsArgs {
    /// Bits per prime; defaults to the profile's size.
    #[arg(long)]
    pub bits: Option<u64>,
    /// Number of exponents to publish.
    #[arg(long, short = 'm', default_value_t = 8)]
    pub exponents: usize,
}

#[derive(Args)]
pub struct MintArgs {
    #[arg(long, value_enum)]
    pub scheme: Scheme,
    /// Coins per batch (s1; defaults to every exponent).
    #[arg(long)]
    pub count: Option<usize>,
    /// Coins per chain (s2).
    #[arg(long, short = 'n')]
    pub length: Option<u64>,
    #[arg(long)]
    pub customer: String,
    /// Bind the coins to one vendor.
    #[arg(long)]
    pub vendor_tag: Option<String>,
}

#[derive(Args)]
pub struct PayArgs {
    #[arg(long, value_enum)]
    pub scheme: Scheme,
    #[arg(long)]
    pub customer: String,
    #[arg(long)]
    pub vendor: String,
    /// Which of the customer's chains to pay from (s2).
    #[arg(long, default_value_t = 0)]
    pub chain: usize,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub vendor: String,
    /// Do not consult the bank's unspent list.
    #[arg(long)]
    pub offline: bool,
}

#[derive(Args)]
pub struct RedeemArgs {
    #[arg(long)]
    pub vendor: String,
}

#[derive(Args)]
pub struct ScenarioArgs {
    /// Script file, or the name of a bundled script with --bundled.
    pub script: String,
    #[arg(long)]
    pub bundled: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Linear,
    Mdhc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Requests {
    /// Every node of the chain.
    All,
    /// Only the root, the farthest node from the start.
    Root,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub shape: Shape,
    /// Nodes per dimension beyond the root.
    #[arg(long, short = 'n')]
    pub n: u64,
    /// Dimensions (mdhc only).
    #[arg(long, short = 'm', default_value_t = 1)]
    pub m: usize,
    /// store-all, store-root-only, or checkpoint:T.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: mdhc::TraversalStrategy,
    #[arg(long, value_enum, default_value = "all")]
    pub requests: Requests,
}

fn parse_seed(text: &str) -> Result<Seed, String> {
    if text.is_empty() {
        return Err("seed must not be empty".into());
    }
    Seed::from_hex(text).map_err(|e| e.to_string())
}

fn parse_strategy(text: &str) -> Result<mdhc::TraversalStrategy, String> {
    use mdhc::TraversalStrategy::*;
    match text {
        "store-all" | "store_all" => Ok(StoreAll),
        "store-root-only" | "store_root_only" => Ok(StoreRootOnly),
        other => match other.strip_prefix("checkpoint:") {
            Some(t) => match t.parse::<u64>() {
                Ok(t) if t > 0 => Ok(CheckpointEvery(t)),
                _ => Err(format!("checkpoint spacing must be a positive integer, got {t:?}")),
            },
            None => Err(format!(
                "unknown strategy {other:?}; use store-all, store-root-only or checkpoint:T"
            )),
        },
    }
}

/// Why a command stopped.
pub enum Failure {
    /// A coin, chain or script step failed a protocol check.
    Violation(String),
    /// Bad arguments, missing files, malformed input.
    Usage(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context::new(cli.profile.into(), cli.seed, cli.dir);
    let result = match &cli.command {
        Command::Params(a) => commands::params(&ctx, a),
        Command::Mint(a) => commands::mint(&ctx, a),
        Command::Pay(a) => commands::pay(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Redeem(a) => commands::redeem(&ctx, a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Bench(a) => commands::bench(&ctx, a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Violation(out)) => {
            print!("{out}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
