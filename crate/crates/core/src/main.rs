use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diiqn::harness::sweep::{run_sweep, Executor, ExperimentPlan};
use diiqn::harness::{
    build_dataset, dataset_for, evaluate_model, load_config, load_dataset, manifest_path, parse_cell,
    save_dataset, script_expert, train, train_expert, write_text, DatasetManifest, HarnessError, Result,
};
use diiqn::learner::RunConfig;

/// Deep implicit imitation Q-learning experiments.
#[derive(Parser)]
#[command(name = "diiqn", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the default run config as TOML.
    DefaultConfig,
    /// Train a DQN expert on the expert action set and record episodes.
    TrainExpert {
        #[arg(long)]
        config: PathBuf,
        /// Evaluation return that ends training.
        #[arg(long, allow_hyphen_values = true)]
        target_return: f32,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        /// Consecutive evaluations that must reach the target.
        #[arg(long, default_value_t = 1)]
        window: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record scripted expert episodes (BFS routes or the point-mass controller).
    ScriptExpert {
        #[arg(long)]
        config: PathBuf,
        /// Grid cell `x,y` the route must pass through; repeatable.
        #[arg(long = "waypoint")]
        waypoints: Vec<String>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenate dataset files into one.
    BuildDataset {
        #[arg(long)]
        out: PathBuf,
        inputs: Vec<PathBuf>,
    },
    /// Train an agent and write metrics CSVs, summary.json and the model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f32,
    },
    /// Run every variant x seed cell of a plan and aggregate.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Worker processes running cells concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run cells inside this process instead of worker processes.
        #[arg(long)]
        in_process: bool,
    },
}

fn dataset_manifest(cfg: &RunConfig, file: &diiqn::expert::DatasetFile, sources: Vec<String>) -> DatasetManifest {
    DatasetManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        records: file.len(),
        experts: file.expert_ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0),
        sources,
    }
}

fn source_manifest(path: &Path) -> Option<DatasetManifest> {
    serde_json::from_str(&std::fs::read_to_string(manifest_path(path)).ok()?).ok()
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::DefaultConfig => print!("{}", RunConfig::default().to_toml()),
        Cmd::TrainExpert {
            config,
            target_return,
            episodes,
            window,
            out,
        } => {
            let cfg = load_config(&config)?;
            let (file, log) = train_expert(&cfg, target_return, episodes, window)?;
            save_dataset(&out, &file, &dataset_manifest(&cfg, &file, vec![config.display().to_string()]))?;
            println!("expert reached the target after {} steps; recorded {} transitions", log.steps, file.len());
        }
        Cmd::ScriptExpert {
            config,
            waypoints,
            episodes,
            out,
        } => {
            let cfg = load_config(&config)?;
            let cells = waypoints.iter().map(|w| parse_cell(w)).collect::<Result<Vec<_>>>()?;
            let file = script_expert(&cfg, &cells, episodes)?;
            save_dataset(&out, &file, &dataset_manifest(&cfg, &file, vec![config.display().to_string()]))?;
            println!("recorded {} transitions", file.len());
        }
        Cmd::BuildDataset { out, inputs } => {
            let parts = inputs.iter().map(|p| load_dataset(p)).collect::<Result<Vec<_>>>()?;
            let file = build_dataset(parts)?;
            let first = inputs.first().and_then(|p| source_manifest(p));
            let manifest = DatasetManifest {
                config_hash: first.as_ref().map(|m| m.config_hash.clone()).unwrap_or_default(),
                seed: first.map_or(0, |m| m.seed),
                records: file.len(),
                experts: file.expert_ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0),
                sources: inputs.iter().map(|p| p.display().to_string()).collect(),
            };
            save_dataset(&out, &file, &manifest)?;
            println!("wrote {} transitions from {} files", file.len(), inputs.len());
        }
        Cmd::Train { config, out } => {
            let cfg = load_config(&config)?;
            let dataset = dataset_for(&cfg)?;
            let summary = train(&cfg, dataset.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Eval {
            config,
            model,
            episodes,
            eps,
        } => {
            let cfg = load_config(&config)?;
            let summary = evaluate_model(&cfg, &model, episodes, eps)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Sweep { plan, jobs, in_process } => {
            let plan = ExperimentPlan::load(&plan)?;
            let executor = if in_process {
                Executor::InProcess
            } else {
                let exe = std::env::current_exe().map_err(|e| HarnessError::Usage(format!("locating executable: {e}")))?;
                Executor::Subprocess { exe, jobs }
            };
            let report = run_sweep(&plan, &executor)?;
            let seeds: Vec<String> = plan.seeds.iter().map(u64::to_string).collect();
            let mut table = format!("# plan_hash={} seeds={}\n", plan.hash, seeds.join(";"));
            table += "variant\tok\tfailed\tmean_final_return\tstd_final_return\n";
            for v in &report.variants {
                table += &format!(
                    "{}\t{}\t{}\t{:.3}\t{:.3}\n",
                    v.variant, v.seeds_ok, v.seeds_failed, v.mean_final_return, v.std_final_return
                );
            }
            print!("{table}");
            write_text(&plan.output.join("summary.txt"), &table)?;
            if !report.failures.is_empty() {
                eprintln!("{} cells failed; see failures.csv", report.failures.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
