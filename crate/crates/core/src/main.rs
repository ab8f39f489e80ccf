use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synsurp::pipeline::{
    cmd_all, cmd_analyze, cmd_fit_predict, cmd_score, cmd_simulate, cmd_train, write_toy_dataset, RunConfig,
    ToyDataConfig,
};
use synsurp::Result;

#[derive(Parser)]
#[command(name = "synsurp", version, about = "Lexical and syntactic surprisal to reading-time pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Model seed; repeat for several. Replaces the configured list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Candidate next words in the tag-prior sum.
    #[arg(long)]
    k: Option<usize>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one joint model per seed.
    Train(RunArgs),
    /// Score the items with every seed's model.
    Score(RunArgs),
    /// Generate reading times from the seed-averaged surprisals.
    Simulate(RunArgs),
    /// Fit the four conversion models on fillers and predict critical items.
    FitPredict(RunArgs),
    /// Effects, contrasts, correlations and plots.
    Analyze(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Write the toy-grammar dataset and a config for it.
    ToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => {
            for o in cmd_train(&a.load()?)? {
                println!("{}", o.checkpoint.display());
            }
        }
        Command::Score(a) => {
            let cfg = a.load()?;
            for (seed, recs) in cmd_score(&cfg)? {
                println!("{} ({} tokens)", cfg.layout().surprisal(seed).display(), recs.len());
            }
        }
        Command::Simulate(a) => {
            let cfg = a.load()?;
            let rts = cmd_simulate(&cfg)?;
            println!("{} ({} readings)", cfg.layout().simulated_rts().display(), rts.len());
        }
        Command::FitPredict(a) => {
            let cfg = a.load()?;
            let out = cmd_fit_predict(&cfg)?;
            println!("{} ({} rows)", cfg.layout().averaged_predictions().display(), out.averaged.len());
        }
        Command::Analyze(a) => {
            let cfg = a.load()?;
            cmd_analyze(&cfg)?;
            println!("{}", cfg.layout().analysis("").display());
        }
        Command::All(a) => {
            let cfg = a.load()?;
            cmd_all(&cfg)?;
            println!("{}", cfg.out.display());
        }
        Command::ToyData { out, seed } => {
            let toy = ToyDataConfig {
                seed,
                ..ToyDataConfig::default()
            };
            println!("{}", write_toy_dataset(&out, &toy)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
