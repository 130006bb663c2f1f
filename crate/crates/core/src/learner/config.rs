use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::BridgeConfig;
use crate::distance::{MetricKind, MetricSpec, StateShape};
use crate::envs::{ActionPattern, EnvConfig, EnvKind, PointMassParams};
use crate::replay::BetaSchedule;

use super::LearnerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dqn,
    Diiqn,
    HaDiiqn,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Diiqn => "diiqn",
            Algorithm::HaDiiqn => "ha-diiqn",
        })
    }
}

/// Every knob of a training run, as one flat table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,

    pub env: EnvKind,
    /// Built-in layout name or path to an ASCII layout file.
    pub layout: String,
    pub expert_pattern: String,
    pub agent_pattern: String,
    pub max_episode_steps: usize,
    pub step_penalty: f32,
    pub goal_reward: f32,
    pub sticky_prob: f32,
    pub pm_dt: f32,
    pub pm_friction: f32,
    pub pm_v_max: f32,
    pub pm_force: f32,
    pub pm_goal_tolerance: f32,
    pub pm_position_resolution: f32,
    pub pm_velocity_bins: u32,

    /// Total environment steps, warmup included.
    pub t_train: u64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub eps_start: f32,
    pub eps_end: f32,
    pub eps_steps: u64,
    /// Initial steps taken with uniformly random actions and no updates.
    pub warmup: u64,
    pub gamma: f32,
    pub f_learn: u64,
    pub f_target: u64,
    pub alpha_per: f64,
    pub beta_per_start: f64,
    pub beta_per_end: f64,
    pub beta_per_steps: u64,
    pub hidden: Vec<usize>,
    /// Select bootstrap actions with the online network.
    pub double_dqn: bool,

    /// Expert dataset file; required unless `algorithm = "dqn"`.
    pub dataset: Option<String>,
    pub tau_similar: f32,
    pub c_max: u32,
    pub k_knn: usize,
    /// Sigmoid sharpness of the Q-gap confidence term.
    pub beta_conf: f32,
    pub metric: MetricKind,
    pub w_base: f32,
    pub lambda: f32,
    pub rho_max: f32,
    pub static_channel_weights: Option<Vec<f32>>,
    /// Tolerance for linking expert chains (0 = exact).
    pub chain_eps: f32,
    /// Replace every computed confidence by this constant (testing aid).
    pub phi_override: Option<f32>,

    pub tau_infeas: f32,
    pub bridge_k: usize,
    pub bridge_n: usize,
    pub bridge_update_interval: u64,
    pub match_tau: f32,

    pub log_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_eps: f32,
    /// Normalized evaluation return counted as optimal.
    pub converge_threshold: f32,
    /// Stop once this many consecutive evaluations are optimal (0 = never).
    pub stop_after_converged_evals: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Dqn,
            seed: 0,
            env: EnvKind::Maze,
            layout: "maze15".into(),
            expert_pattern: "standard".into(),
            agent_pattern: "modified".into(),
            max_episode_steps: 200,
            step_penalty: -1.0,
            goal_reward: 100.0,
            sticky_prob: 0.0,
            pm_dt: 0.1,
            pm_friction: 0.1,
            pm_v_max: 1.0,
            pm_force: 1.0,
            pm_goal_tolerance: 0.5,
            pm_position_resolution: 0.25,
            pm_velocity_bins: 20,
            t_train: 300_000,
            buffer_size: 50_000,
            batch_size: 32,
            lr: 6.3e-4,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_steps: 100_000,
            warmup: 5_000,
            gamma: 0.98,
            f_learn: 1,
            f_target: 1_000,
            alpha_per: 0.6,
            beta_per_start: 0.4,
            beta_per_end: 1.0,
            beta_per_steps: 200_000,
            hidden: vec![128, 64],
            double_dqn: true,
            dataset: None,
            tau_similar: 0.96,
            c_max: 50_000,
            k_knn: 5,
            beta_conf: 1.0,
            metric: MetricKind::EuclideanNormalized,
            w_base: 1.0,
            lambda: 2.0,
            rho_max: 1.0,
            static_channel_weights: None,
            chain_eps: 0.0,
            phi_override: None,
            tau_infeas: 0.95,
            bridge_k: 4,
            bridge_n: 3,
            bridge_update_interval: 1_000,
            match_tau: 0.0,
            log_interval: 1_000,
            eval_interval: 5_000,
            eval_episodes: 5,
            eval_eps: 0.01,
            converge_threshold: 0.999,
            stop_after_converged_evals: 0,
        }
    }
}

impl RunConfig {
    pub fn env_config(&self) -> Result<EnvConfig, LearnerError> {
        Ok(EnvConfig {
            kind: self.env,
            layout: self.layout.clone(),
            expert_pattern: self.expert_pattern.parse::<ActionPattern>()?,
            agent_pattern: self.agent_pattern.parse::<ActionPattern>()?,
            max_episode_steps: self.max_episode_steps,
            step_penalty: self.step_penalty,
            goal_reward: self.goal_reward,
            sticky_prob: self.sticky_prob,
            point_mass: PointMassParams {
                dt: self.pm_dt,
                friction: self.pm_friction,
                v_max: self.pm_v_max,
                force: self.pm_force,
                goal_tolerance: self.pm_goal_tolerance,
                position_resolution: self.pm_position_resolution,
                velocity_bins: self.pm_velocity_bins,
            },
        })
    }

    pub fn metric_spec(&self, state_dim: usize) -> MetricSpec {
        MetricSpec {
            kind: self.metric,
            shape: StateShape::Flat(state_dim),
            static_channel_weights: self.static_channel_weights.clone(),
            w_base: self.w_base,
            lambda: self.lambda,
            rho_max: self.rho_max,
        }
    }

    pub fn bridge_config(&self) -> BridgeConfig {
        BridgeConfig {
            tau_infeas: self.tau_infeas,
            k: self.bridge_k,
            n: self.bridge_n,
            update_interval: self.bridge_update_interval,
            match_tau: self.match_tau,
        }
    }

    pub fn beta_schedule(&self) -> BetaSchedule {
        BetaSchedule {
            start: self.beta_per_start,
            end: self.beta_per_end,
            steps: self.beta_per_steps,
        }
    }

    /// Exploration rate at global step `t`.
    pub fn epsilon(&self, t: u64) -> f32 {
        if self.eps_steps == 0 || t >= self.eps_steps {
            return self.eps_end;
        }
        self.eps_start + (self.eps_end - self.eps_start) * (t as f64 / self.eps_steps as f64) as f32
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.buffer_size < self.batch_size {
            return bad("need 0 < batch_size <= buffer_size");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        if !unit(self.eps_start) || !unit(self.eps_end) || self.eps_end > self.eps_start {
            return bad("epsilon schedule must be non-increasing within [0, 1]");
        }
        if !unit(self.eval_eps) {
            return bad("eval_eps must lie in [0, 1]");
        }
        if self.beta_per_start > self.beta_per_end || self.beta_per_start < 0.0 {
            return bad("PER beta schedule must be non-decreasing and >= 0");
        }
        if self.f_learn == 0 || self.f_target == 0 || self.log_interval == 0 {
            return bad("f_learn, f_target and log_interval must be > 0");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer widths must be > 0");
        }
        if !(self.tau_similar > 0.0 && self.tau_similar <= 1.0) {
            return bad("tau_similar must lie in (0, 1]");
        }
        if self.c_max == 0 || self.k_knn == 0 {
            return bad("c_max and k_knn must be > 0");
        }
        if !(self.beta_conf > 0.0) {
            return bad("beta_conf must be > 0");
        }
        if let Some(phi) = self.phi_override {
            if !unit(phi) {
                return bad("phi_override must lie in [0, 1]");
            }
        }
        if !(self.tau_infeas > 0.0 && self.tau_infeas < 1.0) {
            return bad("tau_infeas must lie in (0, 1)");
        }
        if self.bridge_k == 0 || self.bridge_update_interval == 0 {
            return bad("bridge_k and bridge_update_interval must be > 0");
        }
        if !(self.match_tau >= 0.0 && self.chain_eps >= 0.0) {
            return bad("match_tau and chain_eps must be >= 0");
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be > 0 when evaluating");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, LearnerError> {
        toml::from_str(text).map_err(|e| LearnerError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
