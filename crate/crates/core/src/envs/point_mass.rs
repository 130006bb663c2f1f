use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvSpec, Environment, MazeLayout, ReturnBounds, StateVec, Step};

/// Integrator constants for [`PointMass`]. Lengths are in cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassParams {
    pub dt: f32,
    pub friction: f32,
    pub v_max: f32,
    pub force: f32,
    pub goal_tolerance: f32,
    /// Observation grid for positions, in cells (0 disables quantization).
    pub position_resolution: f32,
    /// Number of observation levels across `[-v_max, v_max]` (0 disables).
    pub velocity_bins: u32,
}

impl Default for PointMassParams {
    fn default() -> Self {
        PointMassParams {
            dt: 0.1,
            friction: 0.1,
            v_max: 1.0,
            force: 1.0,
            goal_tolerance: 0.5,
            position_resolution: 0.25,
            velocity_bins: 20,
        }
    }
}

/// A point mass pushed around a maze by force actions.
///
/// Each step: `v += force * dt`, `v *= 1 - friction`, clamp to `±v_max`,
/// then `p += v * dt` one axis at a time; hitting a wall cancels that axis'
/// motion and zeroes its velocity.
#[derive(Clone, Debug)]
pub struct PointMass {
    layout: MazeLayout,
    spec: EnvSpec,
    params: PointMassParams,
    pos: (f32, f32),
    vel: (f32, f32),
    steps: usize,
    done: bool,
    bounds: ReturnBounds,
}

fn center((x, y): (i32, i32)) -> (f32, f32) {
    (x as f32 + 0.5, y as f32 + 0.5)
}

impl PointMass {
    pub fn new(layout: MazeLayout, spec: EnvSpec, params: PointMassParams) -> Result<Self, EnvError> {
        spec.validate()?;
        let p = params;
        let positive = [p.dt, p.v_max, p.force, p.goal_tolerance];
        if positive.iter().any(|v| !(*v > 0.0)) || !(0.0..1.0).contains(&p.friction) {
            return Err(EnvError::Config(format!("invalid point-mass parameters {p:?}")));
        }
        if !(p.position_resolution >= 0.0) {
            return Err(EnvError::Config("position_resolution must be >= 0".into()));
        }
        if layout.start == layout.goal {
            return Err(EnvError::Layout("start and goal coincide".into()));
        }
        let geodesic = geodesic_length(&layout).ok_or_else(|| {
            EnvError::Layout("goal cell not connected to start cell".into())
        })?;
        let min_steps = ((geodesic - p.goal_tolerance).max(0.0) / (p.v_max * p.dt)).ceil();
        let bounds = ReturnBounds {
            worst: spec.step_penalty * spec.max_episode_steps as f32,
            best: spec.goal_reward + spec.step_penalty * min_steps.max(1.0),
        };
        let pos = center(layout.start);
        Ok(PointMass {
            layout,
            spec,
            params,
            pos,
            vel: (0.0, 0.0),
            steps: 0,
            done: false,
            bounds,
        })
    }

    pub fn position(&self) -> (f32, f32) {
        self.pos
    }

    pub fn velocity(&self) -> (f32, f32) {
        self.vel
    }

    fn wall_at(&self, (x, y): (f32, f32)) -> bool {
        self.layout.is_wall((x.floor() as i32, y.floor() as i32))
    }

    fn quantize(value: f32, levels: f32) -> f32 {
        if levels > 0.0 {
            ((value * levels).round() / levels).clamp(0.0, 1.0)
        } else {
            value.clamp(0.0, 1.0)
        }
    }

    fn observe(&self) -> StateVec {
        let p = &self.params;
        let (w, h) = (self.layout.width as f32, self.layout.height as f32);
        let pos_levels = |extent: f32| {
            if p.position_resolution > 0.0 {
                extent / p.position_resolution
            } else {
                0.0
            }
        };
        let vel = |v: f32| (v + p.v_max) / (2.0 * p.v_max);
        let vbins = p.velocity_bins as f32;
        vec![
            Self::quantize(self.pos.0 / w, pos_levels(w)),
            Self::quantize(self.pos.1 / h, pos_levels(h)),
            Self::quantize(vel(self.vel.0), vbins),
            Self::quantize(vel(self.vel.1), vbins),
        ]
    }
}

#[derive(PartialEq)]
struct Frontier(f32, (i32, i32));

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest start-to-goal distance through free cell centers with
/// 8-connectivity (diagonal steps only when both side cells are free).
fn geodesic_length(layout: &MazeLayout) -> Option<f32> {
    let idx = |(x, y): (i32, i32)| y as usize * layout.width + x as usize;
    let mut best = vec![f32::INFINITY; layout.width * layout.height];
    let mut heap = BinaryHeap::from([Frontier(0.0, layout.start)]);
    best[idx(layout.start)] = 0.0;
    while let Some(Frontier(d, c)) = heap.pop() {
        if c == layout.goal {
            return Some(d);
        }
        if d > best[idx(c)] {
            continue;
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                let n = (c.0 + dx, c.1 + dy);
                if layout.is_wall(n)
                    || (dx != 0 && dy != 0
                        && (layout.is_wall((c.0 + dx, c.1)) || layout.is_wall((c.0, c.1 + dy))))
                {
                    continue;
                }
                let nd = d + ((dx * dx + dy * dy) as f32).sqrt();
                if nd < best[idx(n)] {
                    best[idx(n)] = nd;
                    heap.push(Frontier(nd, n));
                }
            }
        }
    }
    None
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> StateVec {
        self.pos = center(self.layout.start);
        self.vel = (0.0, 0.0);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        let moves = &self.spec.action_set().moves;
        let &(fx, fy) = moves.get(action).ok_or(EnvError::InvalidAction {
            action,
            actions: moves.len(),
        })?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let p = self.params;
        let update = |v: f32, f: f32| {
            ((v + f * p.force * p.dt) * (1.0 - p.friction)).clamp(-p.v_max, p.v_max)
        };
        self.vel = (update(self.vel.0, fx), update(self.vel.1, fy));

        let nx = self.pos.0 + self.vel.0 * p.dt;
        if self.wall_at((nx, self.pos.1)) {
            self.vel.0 = 0.0;
        } else {
            self.pos.0 = nx;
        }
        let ny = self.pos.1 + self.vel.1 * p.dt;
        if self.wall_at((self.pos.0, ny)) {
            self.vel.1 = 0.0;
        } else {
            self.pos.1 = ny;
        }

        self.steps += 1;
        let goal = center(self.layout.goal);
        let dist = ((self.pos.0 - goal.0).powi(2) + (self.pos.1 - goal.1).powi(2)).sqrt();
        let reached_goal = dist <= p.goal_tolerance;
        let mut reward = self.spec.step_penalty;
        if reached_goal {
            reward += self.spec.goal_reward;
        }
        self.done = reached_goal || self.steps >= self.spec.max_episode_steps;
        Ok(Step {
            state: self.observe(),
            reward,
            done: self.done,
            reached_goal,
        })
    }

    fn return_bounds(&self) -> ReturnBounds {
        self.bounds
    }

    fn render(&self) -> String {
        let mut rows: Vec<Vec<char>> = self
            .layout
            .to_string()
            .lines()
            .map(|l| l.chars().collect())
            .collect();
        let (x, y) = (self.pos.0.floor() as usize, self.pos.1.floor() as usize);
        rows[y][x] = 'A';
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>() + "\n")
            .collect()
    }
}
