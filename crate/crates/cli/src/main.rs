use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nncift::pipeline::{run_all, Run, RunConfig};
use nncift::Result;

#[derive(Parser)]
#[command(name = "nncift", version, about = "Estimate influence values with a small network and select fine-tuning subsets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-truth influence on Q1 (or ID samples); writes q1.nnk and ledger.json
    Valuate(Common),
    /// Train the estimator on Q1 and fill in the rest; writes params.json and full.nnk
    TrainEstimate(Common),
    /// Select ⌈v·M⌉ fine-tune samples; writes selection.json
    Select(Common),
    /// All three steps plus report.json, or one run per cell of a u/v sweep
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; defaults to the config's out_dir, then ./run
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn prepare(args: &Common) -> Result<(RunConfig, PathBuf, Option<String>)> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    let token = std::env::var("NNCIFT_HTTP_TOKEN").ok().filter(|t| !t.is_empty());
    Ok((config, out, token))
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Valuate(args) => {
            let (config, out, token) = prepare(args)?;
            let q1 = Run::new(config, &out, token)?.valuate()?;
            println!("valuated {} cells -> {}", q1.valid_count(), out.join("q1.nnk").display());
        }
        Command::TrainEstimate(args) => {
            let (config, out, token) = prepare(args)?;
            let full = Run::new(config, &out, token)?.train_estimate()?;
            println!(
                "estimated {}x{} matrix -> {}",
                full.m(),
                full.n(),
                out.join("full.nnk").display()
            );
        }
        Command::Select(args) => {
            let (config, out, token) = prepare(args)?;
            let record = Run::new(config, &out, token)?.select()?;
            println!(
                "selected {} of budget {} with {} -> {}",
                record.indices.len(),
                record.budget,
                record.selector,
                out.join("selection.json").display()
            );
        }
        Command::Pipeline(args) => {
            let (config, out, token) = prepare(args)?;
            for report in run_all(&config, &out, token)? {
                print!("{}", report.render_text());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{message}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
