//! Training loops for DQN, DIIQN and HA-DIIQN.
//!
//! All three share one loop; the algorithm only decides whether the expert
//! dataset is consulted and how infeasible expert transitions are treated.
//! Randomness is split into independent streams (network init, acting,
//! replay sampling, expert sampling, evaluation) so that switching the expert
//! machinery on without an expert leaves every other draw untouched.

mod config;
mod metrics;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bridge::{refresh_bridges, AgentTrajectoryView};
use crate::distance::DistanceError;
use crate::envs::{EnvError, Environment, Role, StateVec};
use crate::expert::{DatasetFile, ExpertDataset, ExpertError};
use crate::nn::{NnError, Optimizer, QNetwork};
use crate::replay::{AugmentedExperience, PrioritizedReplay, ReplayError};

pub use config::{Algorithm, RunConfig};
pub use metrics::{
    moving_average, read_csv, write_csv, EpisodeRow, EvalRow, IntervalRow, MetricsLog,
};
pub use train::{
    ddqn_target, select_action, train_step, train_step_diiqn, train_step_ha, StepOutcome,
    StepParams,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
enum Stream {
    Init = 1,
    Act = 2,
    Replay = 3,
    Expert = 4,
    Eval = 5,
    EnvSticky = 6,
    EvalSticky = 7,
    ExpertInit = 8,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// One agent transition and the expert records it was compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceStep {
    pub s_a: StateVec,
    pub a_a: usize,
    pub s_a_next: StateVec,
    pub candidates: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferenceTrace {
    /// Randomly initialized inferred action of every record.
    pub initial_actions: Vec<usize>,
    pub steps: Vec<InferenceStep>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub trace_inference: bool,
}

pub struct RunOutput {
    pub log: MetricsLog,
    pub online: QNetwork,
    pub dataset: Option<ExpertDataset>,
    pub trace: Option<InferenceTrace>,
}

/// Train according to `cfg`. `expert` is required unless the algorithm is
/// plain DQN, where it is ignored.
pub fn run(cfg: &RunConfig, expert: Option<&DatasetFile>) -> Result<MetricsLog, LearnerError> {
    Ok(run_with(cfg, expert, &RunOptions::default())?.log)
}

/// Build an expert dataset for the agent of `cfg` from a dataset file.
pub fn load_expert(cfg: &RunConfig, file: &DatasetFile) -> Result<ExpertDataset, LearnerError> {
    let env_cfg = cfg.env_config()?;
    let spec = env_cfg.spec(Role::Agent, env_cfg.state_dim());
    let metric = cfg.metric_spec(spec.state_dim);
    if file.metric != metric.kind || file.shape != metric.shape {
        return Err(ExpertError::MetricMismatch {
            expected: format!("{:?} {:?}", metric.kind, metric.shape),
            found: format!("{:?} {:?}", file.metric, file.shape),
        }
        .into());
    }
    Ok(ExpertDataset::load_with_ids(
        file.transitions.clone(),
        file.expert_ids.clone(),
        metric,
        spec.agent_pattern.len(),
        cfg.chain_eps,
        &mut stream(cfg.seed, Stream::ExpertInit),
    )?)
}

/// Greedy-ish evaluation episodes with a separate environment instance.
pub fn evaluate<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    net: &QNetwork,
    episodes: usize,
    eps: f32,
    rng: &mut R,
) -> Result<(Vec<f32>, Vec<bool>), LearnerError> {
    let mut returns = Vec::with_capacity(episodes);
    let mut goals = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset();
        let mut total = 0.0;
        loop {
            let a = select_action(&net.forward(&s)?, eps, rng)?;
            let step = env.step(a)?;
            total += step.reward;
            if step.done {
                goals.push(step.reached_goal);
                break;
            }
            s = step.state;
        }
        returns.push(total);
    }
    Ok((returns, goals))
}

#[derive(Default)]
struct IntervalAcc {
    phi_sum: f64,
    samples: u64,
    expert_samples: u64,
    loss_sum: f64,
    updates: u32,
}

pub fn run_with(
    cfg: &RunConfig,
    expert: Option<&DatasetFile>,
    opts: &RunOptions,
) -> Result<RunOutput, LearnerError> {
    cfg.validate()?;
    let env_cfg = cfg.env_config()?;
    let mut env = env_cfg.build(Role::Agent, stream(cfg.seed, Stream::EnvSticky).random())?;
    let mut eval_env = env_cfg.build(Role::Agent, stream(cfg.seed, Stream::EvalSticky).random())?;
    let bounds = env.return_bounds();
    let n_actions = env.num_actions();

    let mut dims = vec![env.state_dim()];
    dims.extend(&cfg.hidden);
    dims.push(n_actions);
    let mut online = QNetwork::<f32>::new(&dims, &mut stream(cfg.seed, Stream::Init))?;
    let mut target = online.clone();

    let mut dataset = match (cfg.algorithm, expert) {
        (Algorithm::Dqn, _) => None,
        (_, Some(file)) => Some(load_expert(cfg, file)?),
        (_, None) => {
            return Err(LearnerError::Config(format!(
                "algorithm {} needs an expert dataset",
                cfg.algorithm
            )))
        }
    };
    let mut trace = opts.trace_inference.then(|| InferenceTrace {
        initial_actions: dataset
            .as_ref()
            .map(|d| d.records().iter().map(|r| r.a_e).collect())
            .unwrap_or_default(),
        steps: Vec::new(),
    });

    let mut act_rng = stream(cfg.seed, Stream::Act);
    let mut replay_rng = stream(cfg.seed, Stream::Replay);
    let mut expert_rng = stream(cfg.seed, Stream::Expert);
    let mut eval_rng = stream(cfg.seed, Stream::Eval);

    let mut replay = PrioritizedReplay::new(cfg.buffer_size, cfg.alpha_per)?;
    let beta_schedule = cfg.beta_schedule();
    let bridge_cfg = cfg.bridge_config();
    let params = StepParams {
        mode: cfg.algorithm,
        gamma: cfg.gamma,
        double_dqn: cfg.double_dqn,
        beta_conf: cfg.beta_conf,
        c_max: cfg.c_max,
        phi_override: cfg.phi_override,
        optimizer: Optimizer::adam(cfg.lr),
    };

    let mut log = MetricsLog::default();
    let mut acc = IntervalAcc::default();
    let mut streak = 0u32;
    let mut streak_start = None;
    let mut s = env.reset();
    let (mut ep_return, mut ep_len, mut episode) = (0.0f32, 0u32, 0u64);

    for t in 0..cfg.t_train {
        let step_no = t + 1;
        let a = if t < cfg.warmup {
            act_rng.random_range(0..n_actions)
        } else {
            select_action(&online.forward(&s)?, cfg.epsilon(t), &mut act_rng)?
        };
        let step = env.step(a)?;

        let mut expert_ref = None;
        if let Some(ds) = dataset.as_mut() {
            if !ds.is_empty() {
                let candidates = ds.inference_candidates(&s, cfg.k_knn)?;
                ds.infer_actions(&s, a, &step.state, &candidates)?;
                if let Some(tr) = trace.as_mut() {
                    tr.steps.push(InferenceStep {
                        s_a: s.clone(),
                        a_a: a,
                        s_a_next: step.state.clone(),
                        candidates,
                    });
                }
                expert_ref = ds.sample_similar(&s, cfg.k_knn, cfg.tau_similar, cfg.c_max, &mut expert_rng)?;
            }
        }
        ep_return += step.reward;
        ep_len += 1;
        let next = if step.done { env.reset() } else { step.state.clone() };
        replay.push(AugmentedExperience {
            s_a: std::mem::replace(&mut s, next),
            a_a: a,
            r: step.reward,
            s_a_next: step.state,
            done: step.done,
            expert_ref,
        });
        if step.done {
            log.episodes.push(EpisodeRow {
                step: step_no,
                episode,
                episode_return: ep_return,
                normalized_return: bounds.normalize(ep_return),
                length: ep_len,
                reached_goal: step.reached_goal,
            });
            episode += 1;
            ep_return = 0.0;
            ep_len = 0;
        }

        if t >= cfg.warmup && step_no % cfg.f_learn == 0 && replay.len() >= cfg.batch_size {
            let beta = beta_schedule.value(t);
            let sampled = replay.sample(cfg.batch_size, cfg.alpha_per, beta, &mut replay_rng)?;
            let batch: Vec<(&AugmentedExperience, f32)> = sampled
                .iter()
                .map(|x| (replay.get(x.index).unwrap(), x.is_weight))
                .collect();
            let outcome = train_step(&mut online, &target, dataset.as_mut(), &batch, &params)?;
            let indices: Vec<usize> = sampled.iter().map(|x| x.index).collect();
            replay.update_priorities(&indices, &outcome.td_errors)?;
            acc.phi_sum += outcome.phis.iter().map(|p| *p as f64).sum::<f64>();
            acc.samples += outcome.phis.len() as u64;
            acc.expert_samples += outcome.expert_samples as u64;
            acc.loss_sum += outcome.loss as f64;
            acc.updates += 1;
        }
        if step_no % cfg.f_target == 0 {
            target.sync_from(&online)?;
        }
        if cfg.algorithm == Algorithm::HaDiiqn && step_no % bridge_cfg.update_interval == 0 {
            if let Some(ds) = dataset.as_mut().filter(|d| !d.is_empty()) {
                let view = AgentTrajectoryView::from_replay(&replay);
                refresh_bridges(&view, ds, &bridge_cfg);
            }
        }
        if step_no % cfg.log_interval == 0 {
            log.intervals.push(interval_row(step_no, cfg.epsilon(t), &acc, dataset.as_ref()));
            acc = IntervalAcc::default();
        }
        if cfg.eval_interval > 0 && step_no % cfg.eval_interval == 0 {
            let (returns, goals) =
                evaluate(&mut *eval_env, &online, cfg.eval_episodes, cfg.eval_eps, &mut eval_rng)?;
            let row = eval_row(step_no, &returns, &goals, |r| bounds.normalize(r));
            if row.mean_normalized >= cfg.converge_threshold {
                if streak == 0 {
                    streak_start = Some(step_no);
                }
                streak += 1;
            } else {
                streak = 0;
                streak_start = None;
            }
            log.evals.push(row);
            if cfg.stop_after_converged_evals > 0 && streak >= cfg.stop_after_converged_evals {
                log.steps = step_no;
                break;
            }
        }
        log.steps = step_no;
    }
    log.convergence_step = streak_start;
    Ok(RunOutput {
        log,
        online,
        dataset,
        trace,
    })
}

fn interval_row(step: u64, epsilon: f32, acc: &IntervalAcc, ds: Option<&ExpertDataset>) -> IntervalRow {
    let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { (sum / n as f64) as f32 };
    let (mut err_sum, mut matched, mut infeasible, mut bridges, mut bridge_len) = (0.0, 0u64, 0u64, 0u32, 0u64);
    let total = ds.map_or(0, |d| d.len()) as u64;
    for r in ds.map(|d| d.records()).unwrap_or(&[]) {
        if r.err.is_finite() {
            err_sum += r.err as f64;
            matched += 1;
        }
        infeasible += r.infeasible as u64;
        if let Some(b) = &r.bridge {
            bridges += 1;
            bridge_len += b.l_feas as u64;
        }
    }
    IntervalRow {
        step,
        epsilon,
        mean_phi: mean(acc.phi_sum, acc.samples),
        expert_fraction: mean(acc.expert_samples as f64, acc.samples),
        mean_loss: mean(acc.loss_sum, acc.updates as u64),
        mean_err: mean(err_sum, matched),
        matched_fraction: mean(matched as f64, total),
        infeasible_fraction: mean(infeasible as f64, total),
        bridges,
        mean_bridge_len: mean(bridge_len as f64, bridges as u64),
        updates: acc.updates,
    }
}

fn eval_row(step: u64, returns: &[f32], goals: &[bool], normalize: impl Fn(f32) -> f32) -> EvalRow {
    let n = returns.len().max(1) as f64;
    let norm: Vec<f64> = returns.iter().map(|r| normalize(*r) as f64).collect();
    let mean_norm = norm.iter().sum::<f64>() / n;
    let var = norm.iter().map(|x| (x - mean_norm).powi(2)).sum::<f64>() / n;
    EvalRow {
        step,
        mean_return: (returns.iter().map(|r| *r as f64).sum::<f64>() / n) as f32,
        mean_normalized: mean_norm as f32,
        std_normalized: var.sqrt() as f32,
        success_rate: (goals.iter().filter(|g| **g).count() as f64 / n) as f32,
    }
}
