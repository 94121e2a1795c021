use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use skott::harness::{
    load_truth, run_experiment, write_outputs, ExperimentOutcome, ExperimentPlan,
};
use skott::market::MarketTruth;
use skott::metrics::{read_epoch_csv, summarize_all, Summary};
use skott::Error;

#[derive(Parser)]
#[command(
    name = "skott",
    version,
    about = "Back-test campaign optimizers on a synthetic RTB market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PlanArgs {
    /// Experiment plan (JSON); defaults are used for missing keys.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stack of a plan for every repetition and write the reports.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory for epochs.csv, summary.json and series.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        day_parting: Option<bool>,
        /// Comma-separated stacks, e.g. `vnl,skt1,skt1+skt2+skt3`.
        #[arg(long, value_delimiter = ',')]
        stacks: Option<Vec<String>>,
        /// Hour slot to run under day parting: 0..23 or `all`.
        #[arg(long)]
        slot: Option<String>,
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Dump the market truth of a repetition, or check a saved one.
    Truth {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        /// Where to write the truth; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate a truth file and print its fingerprint instead.
        #[arg(long, conflicts_with = "out")]
        load: Option<PathBuf>,
    },
    /// Re-summarize an existing per-epoch CSV.
    Report {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        baseline: Option<String>,
        /// Directory to write summary.json into; printed only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_plan(args: &PlanArgs) -> Result<ExperimentPlan, Error> {
    let mut plan = match &args.plan {
        Some(path) => ExperimentPlan::from_json_file(path)?,
        None => ExperimentPlan::default(),
    };
    plan.apply_env_overrides(std::env::vars())?;
    if let Some(seed) = args.seed {
        plan.config.seed = seed;
    }
    Ok(plan)
}

fn parse_slot(s: &str) -> Result<Option<usize>, Error> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("slot must be 0..23 or all, got {s:?}")))
}

fn print_summary(summary: &Summary) {
    println!(
        "{:<18} {:>8} {:>9} {:>8} {:>7} {:>5}",
        "algo", "spt", "clk", "cpc", "kld", "reps"
    );
    for r in &summary.rows {
        println!(
            "{:<18} {:>7.1}% {:>8.1}% {:>8.3} {:>7.3} {:>5}",
            r.algo, r.spt, r.clk, r.cpc, r.kld, r.repetitions
        );
    }
    for (algo, rep, msg) in &summary.failures {
        println!("failed: {algo} repetition {rep}: {msg}");
    }
}

fn write_summary(summary: &Summary, dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(file, summary)?;
    Ok(())
}

/// 0 when every repetition completed, 2 when some failed.
fn run_status(outcome: &ExperimentOutcome) -> u8 {
    if outcome.has_failures() {
        2
    } else {
        0
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            plan,
            reps,
            out,
            day_parting,
            stacks,
            slot,
            baseline,
        } => {
            let mut plan = load_plan(&plan)?;
            if let Some(r) = reps {
                plan.config.repetitions = r;
            }
            if let Some(d) = day_parting {
                plan.config.day_parting = d;
            }
            if let Some(s) = stacks {
                plan.algorithms = s;
            }
            if let Some(s) = slot {
                plan.slot = parse_slot(&s)?;
            }
            if baseline.is_some() {
                plan.baseline = baseline;
            }
            if out.is_some() {
                plan.output_dir = out;
            }
            let outcome = run_experiment(&plan)?;
            if let Some(dir) = &plan.output_dir {
                write_outputs(&outcome, dir)?;
            }
            print_summary(&outcome.summary);
            Ok(ExitCode::from(run_status(&outcome)))
        }
        Command::Truth {
            plan,
            rep,
            out,
            load,
        } => {
            if let Some(path) = load {
                let truth = load_truth(&path)?;
                println!(
                    "{} media objects, fingerprint {}",
                    truth.len(),
                    truth.fingerprint()
                );
                return Ok(ExitCode::SUCCESS);
            }
            let plan = load_plan(&plan)?;
            plan.config.validate()?;
            let truth: MarketTruth = plan.truth(rep)?;
            let text = serde_json::to_string_pretty(&truth)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report {
            plan,
            input,
            baseline,
            out,
        } => {
            let mut plan = load_plan(&plan)?;
            if baseline.is_some() {
                plan.baseline = baseline;
            }
            let file = std::fs::File::open(&input)
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", input.display())))?;
            let runs = read_epoch_csv(file, plan.run_budget())?;
            let base = match plan.baseline {
                Some(b) => b.parse::<skott::harness::Stack>()?.to_string(),
                None => runs
                    .first()
                    .map(|r| r.algorithm.clone())
                    .ok_or_else(|| Error::Config("empty report input".into()))?,
            };
            let summary = summarize_all(&runs, &base)?;
            if let Some(dir) = out {
                write_summary(&summary, &dir)?;
            }
            print_summary(&summary);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
