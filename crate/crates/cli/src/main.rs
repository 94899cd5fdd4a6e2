//! `lnme`: solve lopsided cuts and replay zombie-channel and double-spend
//! attacks against historical mempool data.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lnme_core::{FeeRate, Objective};
use serde::Serialize;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_EXHAUSTED: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

/// What a successful command produced.
pub enum Completion {
    Done,
    /// Outputs were written but the horizon or budget ran out first.
    Exhausted(String),
}

#[derive(Parser, Debug)]
#[command(name = "lnme", version, about = "Lopsided cuts and mempool-replay attack simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Greedy (or exact) k-lopsided cut of a channel graph.
    Solve(SolveArgs),
    /// Mass closure of zombie channels.
    Zombie(ZombieArgs),
    /// Double-spend attack on the channels of a cut.
    Doublespend(DoubleSpendArgs),
    /// Double-spend profit over a range of coalition sizes.
    ProfitVsK(ProfitVsKArgs),
    /// Synthetic graphs, timelines and block traces.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Re-executes a recorded run and checks that its outputs are reproduced.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    /// `.json` is read as lnd describegraph, anything else as an edge list.
    Auto,
    Lnd,
    Csv,
}

#[derive(Args, Debug, Serialize)]
pub struct GraphInput {
    /// lnd describegraph JSON or `node_a,node_b,capacity` edge list.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: GraphFormat,
}

#[derive(Args, Debug, Serialize)]
pub struct OutDir {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Coalition size.
    #[arg(long, conflicts_with = "k_max", required_unless_present = "k_max")]
    pub k: Option<usize>,
    /// Writes the value-vs-k curve for k = 1..=k_max and the cut at k_max.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, default_value = "edge-count", value_parser = parse_objective)]
    pub objective: Objective,
    /// Exhaustive search instead of greedy (small graphs only).
    #[arg(long, conflicts_with = "k_max")]
    pub exact: bool,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ScenarioKind {
    /// Dec 2017 high congestion, historical block sizes.
    #[value(name = "1")]
    One,
    /// Jan 2022 typical congestion, constant block size.
    #[value(name = "2")]
    Two,
    /// Start from `--start`; constant block size if `--avg-block-txs` is set.
    Custom,
}

#[derive(Args, Debug, Serialize)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "1")]
    pub scenario: ScenarioKind,
    /// Per-minute mempool timeline CSV.
    #[arg(long)]
    pub timeline: PathBuf,
    /// Block trace CSV `height,timestamp,tx_count`.
    #[arg(long)]
    pub blocks: PathBuf,
    /// Unix start time (custom scenario; defaults to the first snapshot).
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<i64>,
    /// Transactions per block in constant-capacity mode (required for scenario 2).
    #[arg(long)]
    pub avg_block_txs: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false)]
pub struct ChannelSource {
    /// Number of zombie channels.
    #[arg(long)]
    pub channels: Option<u64>,
    /// Cut JSON from `solve`; its cut channels are the zombies.
    #[arg(long)]
    pub cut_file: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ZombieArgs {
    #[command(flatten)]
    pub source: ChannelSource,
    /// Static fee in sat/vByte.
    #[arg(long, conflicts_with_all = ["fees", "initial_fee"])]
    pub fee: Option<FeeRate>,
    /// Fee sweep: one run per fee (initial fees when `--dynamic`).
    #[arg(long, value_delimiter = ',', conflicts_with = "initial_fee")]
    pub fees: Vec<FeeRate>,
    /// Bump the fee of every pending closing transaction every `step` blocks.
    #[arg(long)]
    pub dynamic: bool,
    #[arg(long, requires = "dynamic")]
    pub initial_fee: Option<FeeRate>,
    /// Bump interval in blocks; a list sweeps it.
    #[arg(long, value_delimiter = ',', requires = "dynamic")]
    pub step: Vec<u32>,
    /// Fee multiplier per bump; a list sweeps it.
    #[arg(long, value_delimiter = ',', requires = "dynamic")]
    pub beta: Vec<f64>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfitModeArg {
    PerChannel,
    Average,
}

#[derive(Args, Debug, Serialize)]
pub struct AttackArgs {
    /// Fee of the old commitment transactions, sat/vByte.
    #[arg(long)]
    pub attacker_fee: FeeRate,
    /// Static sweep fee, sat/vByte.
    #[arg(long, conflicts_with = "sweep_dynamic")]
    pub sweep_fee: Option<FeeRate>,
    /// Bump the sweep fee every `--sweep-step` blocks by `--sweep-beta`.
    #[arg(long)]
    pub sweep_dynamic: bool,
    #[arg(long, default_value = "100")]
    pub sweep_initial_fee: FeeRate,
    #[arg(long, default_value_t = 7)]
    pub sweep_step: u32,
    #[arg(long, default_value_t = 1.1)]
    pub sweep_beta: f64,
    /// `fixed:<blocks>` or `scaled`.
    #[arg(long, default_value = "scaled")]
    pub delay: String,
    /// Victim bumps the penalty every `step` blocks (static if absent).
    #[arg(long)]
    pub honest_step: Option<u32>,
    #[arg(long, default_value_t = 1.1, requires = "honest_step")]
    pub honest_beta: f64,
    /// Penalties stop being valid once the delay expires.
    #[arg(long)]
    pub strict_expiry: bool,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DoubleSpendArgs {
    /// Cut JSON from `solve`; its cut channels are attacked.
    #[arg(long)]
    pub cut_file: PathBuf,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[arg(long, value_enum, default_value = "per-channel")]
    pub profit_mode: ProfitModeArg,
    /// Capacity assumed for every channel in average mode (default: mean of the attacked channels).
    #[arg(long)]
    pub avg_capacity: Option<u64>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Serialize)]
pub struct ProfitVsKArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Coalition sizes to evaluate.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
pub enum GenCommand {
    /// Scale-free edge list (preferential attachment).
    Graph(GenGraphArgs),
    /// Constant mempool timeline.
    Timeline(GenTimelineArgs),
    /// Evenly spaced block trace.
    Blocks(GenBlocksArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenGraphArgs {
    #[arg(long, required = true)]
    pub scale_free: bool,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constant channel capacity in satoshis.
    #[arg(long, default_value_t = lnme_core::graph::DEFAULT_SYNTHETIC_CAPACITY, conflicts_with = "capacity_range")]
    pub capacity: u64,
    /// Uniform capacity range `lo:hi` in satoshis.
    #[arg(long)]
    pub capacity_range: Option<String>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Serialize)]
pub struct GenTimelineArgs {
    #[arg(long, required = true)]
    pub constant: bool,
    /// Lower band edges in sat/vByte (default: the 36 standard bands).
    #[arg(long, value_delimiter = ',')]
    pub bands: Vec<FeeRate>,
    /// Transactions per band; a single value applies to every band.
    #[arg(long, value_delimiter = ',', required = true)]
    pub count: Vec<u64>,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub start: i64,
    #[arg(long, allow_hyphen_values = true)]
    pub end: i64,
    #[arg(long, default_value_t = 60)]
    pub cadence: i64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Serialize)]
pub struct GenBlocksArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub txs: u64,
    #[arg(long, default_value_t = 600)]
    pub interval: i64,
    #[arg(long, default_value_t = 1)]
    pub start_height: u64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub start_time: i64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Serialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Where the rerun writes; defaults to `<manifest dir>/rerun`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: lnme_core::cut::CutError| e.to_string())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Zombie(_) => "zombie",
            Command::Doublespend(_) => "doublespend",
            Command::ProfitVsK(_) => "profit-vs-k",
            Command::Gen(GenCommand::Graph(_)) => "gen graph",
            Command::Gen(GenCommand::Timeline(_)) => "gen timeline",
            Command::Gen(GenCommand::Blocks(_)) => "gen blocks",
            Command::Rerun(_) => "rerun",
        }
    }
}

fn execute(argv: &[String]) -> Result<Completion, Failure> {
    let full = std::iter::once("lnme".to_string()).chain(argv.iter().cloned());
    let cli = Cli::try_parse_from(full).map_err(|e| Failure::Usage(e.to_string()))?;
    let command = cli.command;
    if let Command::Rerun(args) = &command {
        return rerun(args);
    }
    let mut run = manifest::Run::new(command.name(), argv, &command, out_dir(&command))?;
    let done = match &command {
        Command::Solve(a) => commands::solve(a, &mut run)?,
        Command::Zombie(a) => commands::zombie(a, &mut run)?,
        Command::Doublespend(a) => commands::doublespend(a, &mut run)?,
        Command::ProfitVsK(a) => commands::profit_vs_k(a, &mut run)?,
        Command::Gen(GenCommand::Graph(a)) => commands::gen_graph(a, &mut run)?,
        Command::Gen(GenCommand::Timeline(a)) => commands::gen_timeline(a, &mut run)?,
        Command::Gen(GenCommand::Blocks(a)) => commands::gen_blocks(a, &mut run)?,
        Command::Rerun(_) => unreachable!(),
    };
    run.finish()?;
    Ok(done)
}

fn out_dir(command: &Command) -> &Path {
    match command {
        Command::Solve(a) => &a.out.out_dir,
        Command::Zombie(a) => &a.out.out_dir,
        Command::Doublespend(a) => &a.out.out_dir,
        Command::ProfitVsK(a) => &a.out.out_dir,
        Command::Gen(GenCommand::Graph(a)) => &a.out.out_dir,
        Command::Gen(GenCommand::Timeline(a)) => &a.out.out_dir,
        Command::Gen(GenCommand::Blocks(a)) => &a.out.out_dir,
        Command::Rerun(_) => unreachable!(),
    }
}

fn rerun(args: &RerunArgs) -> Result<Completion, Failure> {
    let recorded = manifest::load_for_rerun(&args.manifest)?;
    let target = match &args.out_dir {
        Some(d) => d.clone(),
        None => args.manifest.parent().unwrap_or(Path::new(".")).join("rerun"),
    };
    let argv = manifest::retarget(&recorded.argv, &target);
    let done = execute(&argv)?;
    let text = std::fs::read_to_string(target.join(manifest::MANIFEST_FILE))
        .map_err(|e| Failure::Data(format!("{}: {e}", target.display())))?;
    let fresh: manifest::RunManifest = serde_json::from_str(&text).map_err(|e| Failure::Data(e.to_string()))?;
    let bad = manifest::mismatched_outputs(&recorded, &fresh);
    if !bad.is_empty() {
        return Err(Failure::Data(format!("outputs differ from the recorded run: {}", bad.join(", "))));
    }
    eprintln!("reproduced {} outputs in {}", fresh.outputs.len(), target.display());
    Ok(done)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = Cli::try_parse_from(std::iter::once("lnme".to_string()).chain(argv.iter().cloned())) {
        // help and version also land here
        let _ = e.print();
        return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
    }
    let pool = lnme_core::thread_pool_from_env();
    match pool.install(|| execute(&argv)) {
        Ok(Completion::Done) => ExitCode::SUCCESS,
        Ok(Completion::Exhausted(why)) => {
            eprintln!("warning: {why}");
            ExitCode::from(EXIT_EXHAUSTED)
        }
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Data(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
