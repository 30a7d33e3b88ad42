use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glmlab::analysis::{analyze, write_outputs, FilterPolicy};
use glmlab::dgp::{Domain, EffectRegime};
use glmlab::par::Execution;
use glmlab::runner::{
    self, build_plan, calibrate, PlanConfig, RunOptions, SamplerConfig, Scale, SimulationPlan,
    Store,
};
use glmlab::{Error, Result};

const ROOT_ENV: &str = "GLMLAB_RESULTS_ROOT";

#[derive(Parser)]
#[command(name = "glmlab", version, about = "Prediction-vs-recovery simulation lab for Bayesian GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialise the datasets of a plan.
    Generate(PlanArgs),
    /// Fit every model of a plan and append metrics to the results store.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        /// Continue an existing store, skipping finished tasks.
        #[arg(long)]
        resume: bool,
    },
    /// Filter a results store and write the summary tables.
    Analyze {
        /// Results store (defaults to $GLMLAB_RESULTS_ROOT).
        store: Option<PathBuf>,
        /// Output directory for the CSV tables.
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
        /// ΔELPD_loo floor below which fits are dropped.
        #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
        delta_floor: f64,
    },
    /// Pilot TPR of the ideal model for every positive-effect scenario.
    Calibrate {
        #[arg(long, value_parser = parse_domain)]
        domain: Domain,
        #[arg(long, default_value_t = 50)]
        replicates: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Alternative preset table (JSON).
        #[arg(long)]
        presets: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Plan file (JSON); overrides --domain/--scale/--seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_domain, default_value = "lower_bounded")]
    domain: Domain,
    #[arg(long, value_parser = parse_scale, default_value = "smoke")]
    scale: Scale,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Results root (defaults to $GLMLAB_RESULTS_ROOT, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn parse_domain(s: &str) -> std::result::Result<Domain, String> {
    match s {
        "lower_bounded" | "lb" => Ok(Domain::LowerBounded),
        "double_bounded" | "db" => Ok(Domain::DoubleBounded),
        _ => Err(format!("unknown domain `{s}` (lower_bounded | double_bounded)")),
    }
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl PlanArgs {
    fn plan(&self) -> Result<SimulationPlan> {
        match &self.config {
            Some(path) => PlanConfig::load(path)?.into_plan(),
            None => build_plan(self.domain, self.scale, self.seed),
        }
    }

    fn store(&self) -> Store {
        Store::new(results_root(self.out.as_deref()))
    }
}

fn results_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::Empty(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => {
            let plan = args.plan()?;
            let store = args.store();
            let n = runner::generate(&plan, &store, Execution::from_workers(args.workers))?;
            println!("{n} datasets ready under {}", store.root.display());
            Ok(())
        }
        Command::Run { plan: args, resume } => {
            let plan = args.plan()?;
            let store = args.store();
            if store.exists() && !resume {
                return Err(Error::Config {
                    path: store.root.display().to_string(),
                    reason: "results store already exists; pass --resume to continue it".into(),
                });
            }
            let options = RunOptions {
                exec: Execution::from_workers(args.workers),
                stop_after: None,
                progress: true,
            };
            let summary = runner::run(&plan, &store, &options)?;
            println!(
                "{} tasks: {} already done, {} executed, {} failed",
                summary.total, summary.already_done, summary.executed, summary.failed
            );
            Ok(())
        }
        Command::Analyze {
            store,
            out,
            delta_floor,
        } => {
            let store = Store::new(results_root(store.as_deref()));
            let path = store.results_path();
            if !path.exists() {
                return Err(Error::Io {
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no results file"),
                    path,
                });
            }
            let records = store.load_records()?;
            let policy = FilterPolicy {
                delta_elpd_floor: delta_floor,
                ..FilterPolicy::default()
            };
            let analysis = analyze(&records, &policy)?;
            write_outputs(&analysis, &out)?;
            let f = &analysis.filter.overall;
            println!(
                "{} records, {} kept, {} dropped ({} non-convergence, {} ΔELPD floor; {:.1}%)",
                f.total,
                f.kept,
                f.dropped(),
                f.non_convergence,
                f.delta_floor,
                100.0 * f.drop_share()
            );
            println!("tables written to {}", out.display());
            Ok(())
        }
        Command::Calibrate {
            domain,
            replicates,
            seed,
            presets,
            workers,
        } => {
            let table = match presets {
                Some(p) => glmlab::presets::PresetTable::load(&p)?,
                None => glmlab::presets::PresetTable::builtin(),
            };
            let configs: Vec<_> = glmlab::dgp::scenario_table(domain, &table)?
                .into_iter()
                .filter(|c| c.regime == EffectRegime::Positive)
                .collect();
            let rows = calibrate(
                &configs,
                replicates,
                seed,
                SamplerConfig::default(),
                Execution::from_workers(workers),
            )?;
            println!("config_id,beta_xy,replicates,converged,tpr,flag");
            for r in rows {
                println!(
                    "{},{},{},{},{:.3},{}",
                    r.config_id, r.beta_xy, r.replicates, r.converged, r.tpr, r.flag
                );
            }
            Ok(())
        }
    }
}
