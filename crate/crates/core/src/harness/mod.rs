//! Command implementations behind the `diiqn` binary: expert training and
//! scripting, dataset assembly, training runs, evaluation and sweeps.
//!
//! Every file written here carries the config hash and seed, either in a
//! `#` header line (CSV), a field (JSON) or a sidecar manifest (datasets).

pub mod sweep;

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demos;
use crate::envs::{Cell, EnvError, EnvKind, Role};
use crate::expert::{read_dataset, write_dataset, DatasetFile, ExpertError};
use crate::learner::{write_csv, MetricsLog};
use crate::learner::{evaluate, run_with, select_action, Algorithm, LearnerError, RunConfig, RunOptions};
use crate::nn::{read_checkpoint, write_checkpoint, NnError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Nn(#[from] NnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expert training stopped after {steps} steps without reaching return {target} (best evaluation return {best})")]
    NotConverged { target: f32, steps: u64, best: f32 },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    /// 1 for problems the caller can fix, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        use HarnessError::*;
        match self {
            Usage(_) | Io { .. } | Json(_) | NotConverged { .. } => 1,
            Learner(LearnerError::Config(_)) | Learner(LearnerError::Env(_)) => 1,
            Expert(ExpertError::Format(_) | ExpertError::MetricMismatch { .. } | ExpertError::Io(_)) => 1,
            Env(EnvError::Layout(_) | EnvError::Pattern(_) | EnvError::Config(_) | EnvError::Io { .. }) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// Load a run config. A relative `dataset` path is resolved against the
/// config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_toml(&read_text(path)?)?;
    if let Some(ds) = &cfg.dataset {
        let p = Path::new(ds);
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.dataset = Some(base.join(p).to_string_lossy().into_owned());
        }
    }
    Ok(cfg)
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_dataset(BufReader::new(f))?)
}

/// Sidecar written next to every dataset file as `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
    pub experts: usize,
    pub sources: Vec<String>,
}

pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_dataset(path: &Path, file: &DatasetFile, manifest: &DatasetManifest) -> Result<()> {
    write_dataset(file, create(path)?)?;
    write_text(&manifest_path(path), &serde_json::to_string_pretty(manifest)?)
}

fn expert_count(file: &DatasetFile) -> usize {
    file.expert_ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0)
}

/// Dataset named by `cfg.dataset`; `None` for plain DQN.
pub fn dataset_for(cfg: &RunConfig) -> Result<Option<DatasetFile>> {
    match (cfg.algorithm, &cfg.dataset) {
        (Algorithm::Dqn, _) => Ok(None),
        (_, Some(p)) => load_dataset(Path::new(p)).map(Some),
        (alg, None) => Err(HarnessError::Usage(format!("algorithm {alg} needs `dataset` in the config"))),
    }
}

fn dataset_shell(cfg: &RunConfig) -> Result<DatasetFile> {
    let env_cfg = cfg.env_config()?;
    let metric = cfg.metric_spec(env_cfg.state_dim());
    Ok(DatasetFile::new(metric.kind, metric.shape))
}

/// Train a DQN agent on the expert's action pattern until `window`
/// consecutive evaluations reach `target_return`, then record `episodes`
/// greedy episodes as state-only transitions.
pub fn train_expert(
    cfg: &RunConfig,
    target_return: f32,
    episodes: usize,
    window: u32,
) -> Result<(DatasetFile, MetricsLog)> {
    if cfg.eval_interval == 0 {
        return Err(HarnessError::Usage("expert training needs eval_interval > 0".into()));
    }
    let mut c = cfg.clone();
    c.algorithm = Algorithm::Dqn;
    c.agent_pattern = c.expert_pattern.clone();
    let env_cfg = c.env_config()?;
    let bounds = env_cfg.build(Role::Agent, 0)?.return_bounds();
    c.converge_threshold = bounds.normalize(target_return);
    c.stop_after_converged_evals = window.max(1);
    let out = run_with(&c, None, &RunOptions::default())?;
    let reached = out.log.evals.len() >= window.max(1) as usize
        && out.log.evals[out.log.evals.len() - window.max(1) as usize..]
            .iter()
            .all(|e| e.mean_normalized >= c.converge_threshold);
    if !reached {
        return Err(HarnessError::NotConverged {
            target: target_return,
            steps: out.log.steps,
            best: out.log.evals.iter().map(|e| e.mean_return).fold(f32::NEG_INFINITY, f32::max),
        });
    }
    let mut file = dataset_shell(cfg)?;
    let mut env = env_cfg.build(Role::Expert, c.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    for id in 0..episodes {
        let mut s = env.reset();
        loop {
            let a = select_action(&out.online.forward(&s)?, 0.0, &mut rng)?;
            let step = env.step(a)?;
            file.transitions.push((s, step.state.clone()));
            file.expert_ids.push(id as u32);
            if step.done {
                break;
            }
            s = step.state;
        }
    }
    Ok((file, out.log))
}

/// Scripted expert episodes: BFS routes through `waypoints` in grid mazes,
/// the steering controller in point mazes.
pub fn script_expert(cfg: &RunConfig, waypoints: &[Cell], episodes: usize) -> Result<DatasetFile> {
    let env_cfg = cfg.env_config()?;
    let mut eps = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        eps.push(match env_cfg.kind {
            EnvKind::Maze => demos::grid_episode(&env_cfg, waypoints)?,
            EnvKind::PointMaze if waypoints.is_empty() => demos::point_mass_episode(&env_cfg)?,
            EnvKind::PointMaze => return Err(HarnessError::Usage("waypoints only apply to grid mazes".into())),
        });
    }
    let shell = dataset_shell(cfg)?;
    let mut file = demos::dataset_file(&eps, shell.metric, env_cfg.state_dim());
    file.shape = shell.shape;
    Ok(file)
}

/// Concatenate datasets. Expert ids are renumbered so experts from
/// different inputs stay distinct; records are not deduplicated.
pub fn build_dataset(parts: Vec<DatasetFile>) -> Result<DatasetFile> {
    let mut parts = parts.into_iter();
    let mut out = parts
        .next()
        .ok_or_else(|| HarnessError::Usage("build-dataset needs at least one input".into()))?;
    for mut part in parts {
        let offset = expert_count(&out) as u32;
        part.expert_ids.iter_mut().for_each(|i| *i += offset);
        out.merge(part)?;
    }
    Ok(out)
}

/// Headline numbers of one training run, written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub steps: u64,
    pub episodes: usize,
    pub convergence_step: Option<u64>,
    /// Last evaluation's mean return, or the last training episode's
    /// return when no evaluation ran.
    pub final_return: f32,
    pub final_normalized: f32,
    pub final_success_rate: f32,
}

impl TrainSummary {
    pub fn from_log(cfg: &RunConfig, log: &MetricsLog) -> Self {
        let (final_return, final_normalized, final_success_rate) = match (log.evals.last(), log.episodes.last()) {
            (Some(e), _) => (e.mean_return, e.mean_normalized, e.success_rate),
            (None, Some(e)) => (e.episode_return, e.normalized_return, e.reached_goal as u8 as f32),
            (None, None) => (0.0, 0.0, 0.0),
        };
        TrainSummary {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            algorithm: cfg.algorithm,
            steps: log.steps,
            episodes: log.episodes.len(),
            convergence_step: log.convergence_step,
            final_return,
            final_normalized,
            final_success_rate,
        }
    }
}

pub const EPISODES_CSV: &str = "episodes.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const EVALS_CSV: &str = "evals.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_TOML: &str = "config.toml";
pub const MODEL_FILE: &str = "model.ckpt";

/// Write a metrics log and its summary into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, log: &MetricsLog) -> Result<TrainSummary> {
    let (hash, seed) = (cfg.hash(), cfg.seed);
    let path = dir.join(EPISODES_CSV);
    write_csv(create(&path)?, &hash, seed, &log.episodes).map_err(io_err(&path))?;
    let path = dir.join(INTERVALS_CSV);
    write_csv(create(&path)?, &hash, seed, &log.intervals).map_err(io_err(&path))?;
    let path = dir.join(EVALS_CSV);
    write_csv(create(&path)?, &hash, seed, &log.evals).map_err(io_err(&path))?;
    let summary = TrainSummary::from_log(cfg, log);
    write_text(&dir.join(SUMMARY_JSON), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Run one training job and write its CSVs, summary, config and model.
pub fn train(cfg: &RunConfig, dataset: Option<&DatasetFile>, dir: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let out = run_with(cfg, dataset, &RunOptions::default())?;
    write_text(&dir.join(CONFIG_TOML), &format!("# config_hash={} seed={}\n{}", cfg.hash(), cfg.seed, cfg.to_toml()))?;
    write_checkpoint(&out.online, create(&dir.join(MODEL_FILE))?)?;
    write_run(dir, cfg, &out.log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_return: f32,
    pub mean_normalized: f32,
    pub success_rate: f32,
    pub returns: Vec<f32>,
}

/// Evaluate a saved model on a fresh agent environment.
pub fn evaluate_model(cfg: &RunConfig, model: &Path, episodes: usize, eps: f32) -> Result<EvalSummary> {
    let f = fs::File::open(model).map_err(io_err(model))?;
    let net = read_checkpoint(BufReader::new(f))?;
    let mut env = cfg.env_config()?.build(Role::Agent, cfg.seed)?;
    if net.input_dim() != env.state_dim() || net.num_actions() != env.num_actions() {
        return Err(HarnessError::Usage(format!(
            "model has {} inputs and {} actions; environment has {} and {}",
            net.input_dim(),
            net.num_actions(),
            env.state_dim(),
            env.num_actions()
        )));
    }
    let bounds = env.return_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (returns, goals) = evaluate(&mut *env, &net, episodes, eps, &mut rng)?;
    let n = episodes.max(1) as f32;
    Ok(EvalSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        episodes,
        mean_return: returns.iter().sum::<f32>() / n,
        mean_normalized: returns.iter().map(|r| bounds.normalize(*r)).sum::<f32>() / n,
        success_rate: goals.iter().filter(|g| **g).count() as f32 / n,
        returns,
    })
}

/// Parse `x,y` cell coordinates.
pub fn parse_cell(text: &str) -> Result<Cell> {
    let bad = || HarnessError::Usage(format!("expected a cell as `x,y`, got `{text}`"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}
