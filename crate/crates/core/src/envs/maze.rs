use super::{Cell, EnvError, EnvSpec, Environment, MazeLayout, ReturnBounds, StateVec, Step};

/// Discrete grid maze. The state is the agent cell `(x / width, y / height)`.
#[derive(Clone, Debug)]
pub struct GridMaze {
    layout: MazeLayout,
    spec: EnvSpec,
    moves: Vec<(i32, i32)>,
    pos: Cell,
    steps: usize,
    done: bool,
    bounds: ReturnBounds,
}

impl GridMaze {
    pub fn new(layout: MazeLayout, spec: EnvSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        let moves = spec.action_set().grid_moves()?;
        if layout.start == layout.goal {
            return Err(EnvError::Layout("start and goal coincide".into()));
        }
        for (role, pattern) in [("expert", &spec.expert_pattern), ("agent", &spec.agent_pattern)] {
            if layout.shortest_path_len(&pattern.grid_moves()?).is_none() {
                return Err(EnvError::Layout(format!(
                    "goal unreachable under the {role} action pattern"
                )));
            }
        }
        let optimal = layout.shortest_path_len(&moves).unwrap();
        let bounds = ReturnBounds {
            worst: spec.step_penalty * spec.max_episode_steps as f32,
            best: spec.goal_reward + spec.step_penalty * optimal as f32,
        };
        Ok(GridMaze {
            pos: layout.start,
            layout,
            spec,
            moves,
            steps: 0,
            done: false,
            bounds,
        })
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    /// Moves of the optimal path under the acting pattern.
    pub fn optimal_steps(&self) -> usize {
        self.layout.shortest_path_len(&self.moves).unwrap()
    }

    pub fn encode(&self, cell: Cell) -> StateVec {
        encode_cell(&self.layout, cell)
    }
}

pub(crate) fn encode_cell(layout: &MazeLayout, (x, y): Cell) -> StateVec {
    vec![x as f32 / layout.width as f32, y as f32 / layout.height as f32]
}

impl Environment for GridMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> StateVec {
        self.pos = self.layout.start;
        self.steps = 0;
        self.done = false;
        self.encode(self.pos)
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        let &delta = self.moves.get(action).ok_or(EnvError::InvalidAction {
            action,
            actions: self.moves.len(),
        })?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if let Some(next) = self.layout.displace(self.pos, delta) {
            self.pos = next;
        }
        self.steps += 1;
        let mut reward = self.spec.step_penalty;
        let reached_goal = self.pos == self.layout.goal;
        if reached_goal {
            reward += self.spec.goal_reward;
        }
        self.done = reached_goal || self.steps >= self.spec.max_episode_steps;
        Ok(Step {
            state: self.encode(self.pos),
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
        rows[self.pos.1 as usize][self.pos.0 as usize] = 'A';
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>() + "\n")
            .collect()
    }
}
