use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use socnav::config::RunConfig;
use socnav::eval::episode::scenario_id;
use socnav::eval::report::{emit_reports, metrics_csv, metrics_table};
use socnav::eval::scenarios::condition;
use socnav::pipeline::{
    self, collect, dataset, eval_scenarios, evaluate, load_policy, read_logs, read_scenarios, run_pipeline, scenario_range,
    train_stage, training_seed, write_file, write_logs, write_scenarios, Maps, PipelineError, PolicyKind, RunDirs, Stage,
};
use socnav::training::DemoArchive;

#[derive(Parser)]
#[command(name = "socnav", about = "Hierarchical social navigation: simulate, collect, train, evaluate")]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write scenario files for one condition.
    GenScenarios {
        #[arg(long)]
        condition: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Draw from the held-out stream of this evaluation seed instead of the training stream.
        #[arg(long)]
        eval_seed: Option<u64>,
    },
    /// Record expert demonstrations into `<out>/demos.snda`.
    Collect,
    /// Train one stage; checkpoints go to `<out>/ckpt`.
    Train {
        #[arg(long)]
        stage: Stage,
        /// Demonstration archive, `<out>/demos.snda` by default.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run a policy over held-out scenarios and write logs and metrics.
    Eval {
        #[arg(long)]
        policy: PolicyKind,
        /// Checkpoint file, default from `<out>/ckpt`.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Directory of scenario files; the configured held-out set by default.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        eval_seed: u64,
    },
    /// Metrics table and attention/trajectory plots from saved logs.
    Report {
        /// Log directories.
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        /// Scenario files for trajectory plots.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Collect, train every stage, evaluate every policy and report.
    Pipeline,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dirs = RunDirs::new(&cli.out);
    let mut maps = Maps::default();
    match cli.cmd {
        Cmd::GenScenarios { condition: name, n, eval_seed } => {
            let cond = condition(&name).ok_or_else(|| socnav::config::ConfigError(format!("unknown condition {name}")))?;
            let seed = match eval_seed {
                Some(e) => pipeline::eval_seed(e, cond.name),
                None => training_seed(&cfg, cond.name),
            };
            let set = scenario_range(&mut maps, &cond, 0, n, seed, &cfg)?;
            let dir = cli.out.join("scenarios").join(cond.name);
            write_scenarios(&dir, &set)?;
            println!("{} scenarios in {}", set.len(), dir.display());
        }
        Cmd::Collect => {
            let (archive, report) = collect(&cfg)?;
            archive.write(&dirs.demos())?;
            write_file(&dirs.collect_report(), serde_json::to_string_pretty(&report).expect("serializes"))?;
            println!(
                "{} episodes, {} records, {} rejected -> {}",
                archive.header.episodes,
                archive.header.records,
                report.rejected.len(),
                dirs.demos().display()
            );
        }
        Cmd::Train { stage, demos } => {
            let archive = DemoArchive::read(&demos.unwrap_or_else(|| dirs.demos()))?;
            let data = dataset(&cfg, &archive)?;
            let r = train_stage(&cfg, stage, &data, &dirs.ckpt())?;
            println!(
                "stage {}: best epoch {} val {:.6e} (epoch 1 {:.6e}) -> {}",
                stage.name(),
                r.best_epoch,
                r.best_val,
                r.first_val(),
                dirs.ckpt().join(stage.checkpoint()).display()
            );
        }
        Cmd::Eval {
            policy,
            ckpt,
            scenarios,
            eval_seed,
        } => {
            let loaded = load_policy(&cfg, policy, &dirs.ckpt(), ckpt.as_deref())?;
            let (set, base) = match &scenarios {
                Some(dir) => (read_scenarios(&mut maps, dir)?, cli.out.join("eval").join("custom")),
                None => (eval_scenarios(&mut maps, &cfg, eval_seed)?, dirs.eval(eval_seed)),
            };
            if scenarios.is_none() {
                write_scenarios(&base.join("scenarios"), &set)?;
            }
            let logs = evaluate(&cfg, &loaded, &set)?;
            let dir = base.join("logs").join(policy.name());
            write_logs(&dir, &logs)?;
            let csv = metrics_csv(&metrics_table(&logs));
            write_file(&dir.join("metrics.csv"), &csv)?;
            print!("{csv}");
        }
        Cmd::Report { logs, scenarios } => {
            let mut all = Vec::new();
            for dir in &logs {
                all.extend(read_logs(dir)?);
            }
            let lookup: BTreeMap<_, _> = match &scenarios {
                Some(dir) => read_scenarios(&mut maps, dir)?.into_iter().map(|(m, s)| (scenario_id(&s), (m, s))).collect(),
                None => BTreeMap::new(),
            };
            let out = cli.out.join("report");
            let rows = emit_reports(&all, &lookup, cfg.world.lidar.r_max, &out).map_err(|e| PipelineError::Io(format!("{}: {e}", out.display())))?;
            print!("{}", metrics_csv(&rows));
        }
        Cmd::Pipeline => {
            let summary = run_pipeline(&cfg, &dirs)?;
            print!("{}", summary.text());
        }
    }
    Ok(())
}
