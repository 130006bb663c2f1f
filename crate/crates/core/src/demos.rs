//! Scripted demonstrators that produce state-only expert episodes.
//!
//! Grid experts follow BFS shortest routes under the expert action pattern,
//! optionally forced through waypoints to make them suboptimal. The
//! point-mass expert steers along the BFS cell route with a simple
//! velocity controller. Episodes are replayed through a real environment
//! instance, so recorded states are exactly what the environment emits.

use crate::distance::{MetricKind, StateShape};
use crate::envs::{Cell, EnvConfig, EnvError, EnvKind, MazeLayout, PointMass, Role, StateVec};
use crate::expert::DatasetFile;

pub type Episode = Vec<(StateVec, StateVec)>;

/// Shortest route from the layout start through `waypoints` to the goal.
pub fn grid_route(layout: &MazeLayout, moves: &[(i32, i32)], waypoints: &[Cell]) -> Option<Vec<Cell>> {
    let mut stops = vec![layout.start];
    stops.extend_from_slice(waypoints);
    stops.push(layout.goal);
    let mut route = vec![layout.start];
    for pair in stops.windows(2) {
        if pair[0] == pair[1] {
            continue;
        }
        let mut leg = layout.clone();
        leg.start = pair[0];
        leg.goal = pair[1];
        route.extend(leg.shortest_path(moves)?.into_iter().skip(1));
    }
    Some(route)
}

fn without_sticky(cfg: &EnvConfig) -> EnvConfig {
    EnvConfig {
        sticky_prob: 0.0,
        ..cfg.clone()
    }
}

/// Record the expert walking the route through `waypoints` in a grid maze.
pub fn grid_episode(cfg: &EnvConfig, waypoints: &[Cell]) -> Result<Episode, EnvError> {
    let cfg = without_sticky(cfg);
    let layout = cfg.load_layout()?;
    let moves = cfg.expert_pattern.grid_moves()?;
    let route = grid_route(&layout, &moves, waypoints)
        .ok_or_else(|| EnvError::Layout("waypoint route is unreachable".into()))?;
    let mut env = cfg.build(Role::Expert, 0)?;
    let mut s = env.reset();
    let mut episode = Vec::with_capacity(route.len());
    for pair in route.windows(2) {
        let delta = (pair[1].0 - pair[0].0, pair[1].1 - pair[0].1);
        let action = moves.iter().position(|m| *m == delta).unwrap();
        let step = env.step(action)?;
        episode.push((s, step.state.clone()));
        s = step.state;
        if step.done {
            break;
        }
    }
    Ok(episode)
}

/// Steer a point mass with the expert pattern's forces along the BFS cell
/// route. Only axis-aligned and no-op forces are used, so the expert
/// pattern must contain them.
pub fn point_mass_episode(cfg: &EnvConfig) -> Result<Episode, EnvError> {
    let cfg = without_sticky(cfg);
    if cfg.kind != EnvKind::PointMaze {
        return Err(EnvError::Config("point-mass expert needs a point-maze config".into()));
    }
    let layout = cfg.load_layout()?;
    let route = grid_route(&layout, &[(0, -1), (0, 1), (-1, 0), (1, 0)], &[])
        .ok_or_else(|| EnvError::Layout("goal unreachable".into()))?;
    let forces = cfg.expert_pattern.moves.clone();
    let find = |f: (f32, f32)| forces.iter().position(|m| *m == f);
    let noop = find((0.0, 0.0));
    let spec = cfg.spec(Role::Expert, cfg.state_dim());
    let mut env = PointMass::new(layout, spec, cfg.point_mass)?;
    let p = cfg.point_mass;
    let mut s = crate::envs::Environment::reset(&mut env);
    let mut episode = Vec::new();
    let mut next = 1;
    for _ in 0..cfg.max_episode_steps {
        let pos = env.position();
        let vel = env.velocity();
        while next + 1 < route.len() {
            let c = route[next];
            let d = ((c.0 as f32 + 0.5 - pos.0).powi(2) + (c.1 as f32 + 0.5 - pos.1).powi(2)).sqrt();
            if d < 0.35 {
                next += 1;
            } else {
                break;
            }
        }
        let c = route[next];
        let err = (c.0 as f32 + 0.5 - pos.0, c.1 as f32 + 0.5 - pos.1);
        let cap = 0.6 * p.v_max;
        let want = |e: f32| (1.5 * e).clamp(-cap, cap);
        let gap = (want(err.0) - vel.0, want(err.1) - vel.1);
        let deadband = 0.5 * p.force * p.dt;
        let axis = if gap.0.abs() >= gap.1.abs() {
            find((gap.0.signum(), 0.0))
        } else {
            find((0.0, gap.1.signum()))
        };
        let choice = match noop {
            Some(_) if gap.0.abs().max(gap.1.abs()) < deadband => noop,
            _ => axis,
        };
        let action = choice
            .or(noop)
            .ok_or_else(|| EnvError::Pattern("expert pattern lacks axis forces".into()))?;
        let step = crate::envs::Environment::step(&mut env, action)?;
        episode.push((s, step.state.clone()));
        s = step.state;
        if step.done {
            if !step.reached_goal {
                return Err(EnvError::Config("scripted point-mass expert timed out".into()));
            }
            return Ok(episode);
        }
    }
    Err(EnvError::Config("scripted point-mass expert timed out".into()))
}

/// Pack episodes into a dataset file; episode `i` gets expert id `i`.
pub fn dataset_file(episodes: &[Episode], metric: MetricKind, state_dim: usize) -> DatasetFile {
    let mut file = DatasetFile::new(metric, StateShape::Flat(state_dim));
    for (id, ep) in episodes.iter().enumerate() {
        file.transitions.extend(ep.iter().cloned());
        file.expert_ids.extend(std::iter::repeat_n(id as u32, ep.len()));
    }
    file
}
