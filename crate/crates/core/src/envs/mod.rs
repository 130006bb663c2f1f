//! Environments: grid mazes, a point-mass maze, and a sticky-action wrapper.
//!
//! Every environment knows two action patterns, the one the demonstrator
//! used and the one the learning agent has, and acts with whichever role it
//! was built for. States are always normalized to `[0, 1]` per component.

mod layout;
mod maze;
mod pattern;
mod point_mass;
mod sticky;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{Cell, MazeLayout};
pub use maze::GridMaze;
pub use pattern::{ActionPattern, PatternName};
pub use point_mass::{PointMass, PointMassParams};
pub use sticky::Sticky;

pub type StateVec = Vec<f32>;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} out of range for {actions} actions")]
    InvalidAction { action: usize, actions: usize },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("layout: {0}")]
    Layout(String),
    #[error("action pattern: {0}")]
    Pattern(String),
    #[error("environment config: {0}")]
    Config(String),
    #[error("reading layout {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Expert,
    Agent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub id: String,
    pub state_dim: usize,
    pub acting: Role,
    pub expert_pattern: ActionPattern,
    pub agent_pattern: ActionPattern,
    pub max_episode_steps: usize,
    pub step_penalty: f32,
    pub goal_reward: f32,
    pub sticky_prob: f32,
}

impl EnvSpec {
    /// The action set this instance executes.
    pub fn action_set(&self) -> &ActionPattern {
        match self.acting {
            Role::Expert => &self.expert_pattern,
            Role::Agent => &self.agent_pattern,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.expert_pattern.validate()?;
        self.agent_pattern.validate()?;
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be > 0");
        }
        if !(self.step_penalty < 0.0) {
            return bad("step_penalty must be < 0");
        }
        if !(self.goal_reward > 0.0) {
            return bad("goal_reward must be > 0");
        }
        if !(0.0..1.0).contains(&self.sticky_prob) {
            return bad("sticky_prob must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: StateVec,
    pub reward: f32,
    pub done: bool,
    pub reached_goal: bool,
}

/// Range of achievable episodic returns, used to normalize returns to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnBounds {
    pub worst: f32,
    pub best: f32,
}

impl ReturnBounds {
    pub fn normalize(&self, ret: f32) -> f32 {
        if self.best > self.worst {
            (ret - self.worst) / (self.best - self.worst)
        } else {
            0.0
        }
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self) -> StateVec;
    fn step(&mut self, action: usize) -> Result<Step, EnvError>;
    fn return_bounds(&self) -> ReturnBounds;

    /// ASCII picture of the current state.
    fn render(&self) -> String {
        String::new()
    }

    fn num_actions(&self) -> usize {
        self.spec().action_set().len()
    }

    fn state_dim(&self) -> usize {
        self.spec().state_dim
    }
}

pub fn expert_action_pattern(env: &dyn Environment) -> &ActionPattern {
    &env.spec().expert_pattern
}

pub fn agent_action_pattern(env: &dyn Environment) -> &ActionPattern {
    &env.spec().agent_pattern
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Maze,
    PointMaze,
}

/// Everything needed to build an environment instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Built-in layout name or path to an ASCII layout file.
    pub layout: String,
    pub expert_pattern: ActionPattern,
    pub agent_pattern: ActionPattern,
    pub max_episode_steps: usize,
    pub step_penalty: f32,
    pub goal_reward: f32,
    pub sticky_prob: f32,
    pub point_mass: PointMassParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: EnvKind::Maze,
            layout: "maze15".into(),
            expert_pattern: ActionPattern::standard(),
            agent_pattern: ActionPattern::modified(),
            max_episode_steps: 200,
            step_penalty: -1.0,
            goal_reward: 100.0,
            sticky_prob: 0.0,
            point_mass: PointMassParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn load_layout(&self) -> Result<MazeLayout, EnvError> {
        if let Some(layout) = MazeLayout::builtin(&self.layout) {
            return Ok(layout);
        }
        let text = std::fs::read_to_string(&self.layout).map_err(|source| EnvError::Io {
            path: self.layout.clone(),
            source,
        })?;
        MazeLayout::parse(&text)
    }

    pub fn spec(&self, acting: Role, state_dim: usize) -> EnvSpec {
        EnvSpec {
            id: format!(
                "{}:{}",
                match self.kind {
                    EnvKind::Maze => "maze",
                    EnvKind::PointMaze => "point-maze",
                },
                self.layout
            ),
            state_dim,
            acting,
            expert_pattern: self.expert_pattern.clone(),
            agent_pattern: self.agent_pattern.clone(),
            max_episode_steps: self.max_episode_steps,
            step_penalty: self.step_penalty,
            goal_reward: self.goal_reward,
            sticky_prob: self.sticky_prob,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::Maze => 2,
            EnvKind::PointMaze => 4,
        }
    }

    /// Build an instance acting with `role`'s action pattern. `seed` drives
    /// the sticky-action draws.
    pub fn build(&self, role: Role, seed: u64) -> Result<Box<dyn Environment>, EnvError> {
        let layout = self.load_layout()?;
        let spec = self.spec(role, self.state_dim());
        let inner: Box<dyn Environment> = match self.kind {
            EnvKind::Maze => Box::new(GridMaze::new(layout, spec)?),
            EnvKind::PointMaze => Box::new(PointMass::new(layout, spec, self.point_mass)?),
        };
        Ok(if self.sticky_prob > 0.0 {
            Box::new(Sticky::new(inner, self.sticky_prob, seed))
        } else {
            inner
        })
    }
}
