use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multiglitch_core::campaign::{self, CampaignConfig, CampaignError, CampaignSummary};
use multiglitch_core::scenarios::builtin;

/// Multi-fault glitch campaign runner.
#[derive(Debug, Parser)]
#[command(name = "multiglitch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-fault sweep of every target.
    Sweep(RunArgs),
    /// Exhaustive baseline search.
    Exhaustive(RunArgs),
    /// Sweep, integrate, rank and (if configured) transfer.
    Flow(RunArgs),
    /// Exhaustive against sweep + integrate, by trials used.
    Compare(RunArgs),
    /// One wide fault against two narrow ones on a two-target scenario.
    WideVsNarrow(RunArgs),
    /// Success rate with and without random delays.
    Countermeasure(RunArgs),
    /// Brown-out detection of a wide fault and its split counterpart.
    Bod(RunArgs),
    /// Rebuild report.csv from results.jsonl and summary.json.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List builtin scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Campaign config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the final and evaluation trial counts.
    #[arg(long)]
    trials: Option<u64>,
}

type Flow = fn(&CampaignConfig, Option<&Path>) -> Result<CampaignSummary, CampaignError>;

fn load(args: &RunArgs) -> Result<CampaignConfig, CampaignError> {
    if !args.config.is_file() {
        return Err(CampaignError::Config(format!("config file {} not found", args.config.display())));
    }
    let mut cfg = CampaignConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(n) = args.trials {
        cfg.search.n_final = n;
        cfg.wide_vs_narrow.get_or_insert_with(Default::default).trials = n;
        cfg.countermeasure.get_or_insert_with(Default::default).trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &CampaignSummary) {
    println!("{} on {}: {} trials", s.command, s.scenario, s.total_trials);
    if let Some(c) = &s.comparison {
        match c.ratio {
            Some(r) => println!(
                "ratio {r:.2} (exhaustive {} trials, sweep+integrate {} trials)",
                c.exhaustive_trials, c.sweeping_trials
            ),
            None => println!(
                "ratio n/a (exhaustive found={} in {} trials, sweep+integrate found={} in {} trials)",
                c.exhaustive_found, c.exhaustive_trials, c.sweeping_found, c.sweeping_trials
            ),
        }
    }
    if let Some(b) = &s.best {
        let combo: Vec<String> = b.combo.iter().map(|u| format!("({},{})", u.offset, u.width)).collect();
        println!("best {}: {}/{} = {:.4}", combo.join(" "), b.successes, b.trials_run, b.success_rate);
    }
    for row in s.cascade.iter().flatten() {
        println!("cascade {}: {:.6}", row.targets.join("+"), row.rate);
    }
    for d in s.wide_vs_narrow.iter().flatten() {
        println!(
            "{}: none {:.3} only_second {:.3} only_first {:.3} both {:.3} invalid {:.3}",
            d.faults, d.none, d.only_second, d.only_first, d.both, d.invalid
        );
    }
    if let Some(c) = &s.countermeasure {
        let factor = c.factor.map_or("n/a".to_string(), |f| format!("{f:.2}"));
        println!("baseline {:.6} delayed {:.6} factor {factor}", c.baseline_rate, c.delayed_rate);
    }
    for p in s.bod.iter().flat_map(|b| &b.periods) {
        println!(
            "period {} ns: wide detected {}/{}, split detected {}/{}",
            p.period_ns, p.wide_detected, p.phases, p.split_detected, p.phases
        );
    }
}

fn run(args: &RunArgs, flow: Flow) -> Result<(), CampaignError> {
    let cfg = load(args)?;
    let summary = flow(&cfg, Some(&args.out))?;
    print_summary(&summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(a) => run(a, campaign::run_sweep),
        Command::Exhaustive(a) => run(a, campaign::run_exhaustive),
        Command::Flow(a) => run(a, campaign::run_attack_flow),
        Command::Compare(a) => run(a, campaign::run_comparison),
        Command::WideVsNarrow(a) => run(a, campaign::run_wide_vs_narrow),
        Command::Countermeasure(a) => run(a, campaign::run_countermeasure_eval),
        Command::Bod(a) => run(a, campaign::run_bod_eval),
        Command::Report { out } => campaign::write_report(out).map(|p| println!("{}", p.display())),
        Command::Scenarios => {
            for s in builtin::all() {
                println!("{}\t{:?}\t{} targets", s.name(), s.kind(), s.targets().len());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CampaignError::Search { summary, .. } = &e {
                print_summary(summary);
            }
            if e.is_search_failure() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
