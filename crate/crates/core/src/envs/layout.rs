//! ASCII maze layouts.
//!
//! One row per line: `#` wall, `.` free, `S` start, `G` goal. Rows must all
//! have the same width.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EnvError;

pub type Cell = (i32, i32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
}

const BUILTIN: &[(&str, &str)] = &[
    ("maze15", include_str!("../../layouts/maze15.txt")),
    ("maze30", include_str!("../../layouts/maze30.txt")),
    ("corridor", include_str!("../../layouts/corridor.txt")),
    ("point-u", include_str!("../../layouts/point-u.txt")),
    ("point-open", include_str!("../../layouts/point-open.txt")),
];

impl MazeLayout {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Option<MazeLayout> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| MazeLayout::parse(text).expect("shipped layout parses"))
    }

    pub fn parse(text: &str) -> Result<MazeLayout, EnvError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let bad = |m: String| Err(EnvError::Layout(m));
        if rows.is_empty() {
            return bad("empty layout".into());
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::with_capacity(width * height);
        let (mut start, mut goal) = (None, None);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return bad(format!("row {y} has width {}, expected {width}", row.len()));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = (x as i32, y as i32);
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' | 'G' => {
                        let slot = if ch == 'S' { &mut start } else { &mut goal };
                        if slot.replace(cell).is_some() {
                            return bad(format!("more than one '{ch}'"));
                        }
                        walls.push(false);
                    }
                    other => return bad(format!("unexpected character {other:?} at ({x}, {y})")),
                }
            }
        }
        let (Some(start), Some(goal)) = (start, goal) else {
            return bad("layout needs exactly one 'S' and one 'G'".into());
        };
        Ok(MazeLayout {
            width,
            height,
            walls,
            start,
            goal,
        })
    }

    pub fn in_bounds(&self, (x, y): Cell) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Out-of-bounds cells count as walls.
    pub fn is_wall(&self, cell: Cell) -> bool {
        !self.in_bounds(cell) || self.walls[cell.1 as usize * self.width + cell.0 as usize]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32)
            .flat_map(move |y| (0..self.width as i32).map(move |x| (x, y)))
            .filter(move |c| !self.is_wall(*c))
    }

    /// Cell reached by a displacement, or `None` when the straight line to the
    /// target crosses a wall or leaves the grid.
    pub fn displace(&self, from: Cell, (dx, dy): (i32, i32)) -> Option<Cell> {
        let n = dx.abs().max(dy.abs());
        for t in 1..=n {
            let cell = (
                from.0 + (dx as f64 * t as f64 / n as f64).round() as i32,
                from.1 + (dy as f64 * t as f64 / n as f64).round() as i32,
            );
            if self.is_wall(cell) {
                return None;
            }
        }
        Some((from.0 + dx, from.1 + dy))
    }

    /// BFS distances (in moves) from `from` under a set of displacements.
    pub fn distances(&self, from: Cell, moves: &[(i32, i32)]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        let idx = |c: Cell| c.1 as usize * self.width + c.0 as usize;
        let mut queue = VecDeque::from([from]);
        dist[idx(from)] = Some(0);
        while let Some(c) = queue.pop_front() {
            let d = dist[idx(c)].unwrap();
            for &m in moves {
                if let Some(n) = self.displace(c, m) {
                    if dist[idx(n)].is_none() {
                        dist[idx(n)] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn shortest_path_len(&self, moves: &[(i32, i32)]) -> Option<usize> {
        self.distances(self.start, moves)[self.goal.1 as usize * self.width + self.goal.0 as usize]
    }

    /// A shortest start-to-goal cell sequence (inclusive). Among equal-length
    /// paths the earliest move in `moves` order wins at every step.
    pub fn shortest_path(&self, moves: &[(i32, i32)]) -> Option<Vec<Cell>> {
        let to_goal = self.distances(self.goal, &reversed(moves));
        let idx = |c: Cell| c.1 as usize * self.width + c.0 as usize;
        let mut d = to_goal[idx(self.start)]?;
        let mut path = vec![self.start];
        let mut cur = self.start;
        while d > 0 {
            let next = moves
                .iter()
                .filter_map(|&m| self.displace(cur, m))
                .find(|n| to_goal[idx(*n)] == Some(d - 1))?;
            path.push(next);
            cur = next;
            d -= 1;
        }
        Some(path)
    }

    /// Random perfect maze on a `(2 * cells_x + 1) x (2 * cells_y + 1)` grid
    /// (recursive backtracker), with `loops` extra walls knocked out between
    /// horizontally or vertically adjacent cells. Start is the top-left cell,
    /// goal the bottom-right one.
    pub fn generate(cells_x: usize, cells_y: usize, loops: usize, seed: u64) -> MazeLayout {
        let (width, height) = (2 * cells_x + 1, 2 * cells_y + 1);
        let mut walls = vec![true; width * height];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let open = |walls: &mut Vec<bool>, x: usize, y: usize| walls[y * width + x] = false;
        let mut visited = HashSet::new();
        let mut stack = vec![(0usize, 0usize)];
        visited.insert((0, 0));
        open(&mut walls, 1, 1);
        while let Some(&(cx, cy)) = stack.last() {
            let mut next: Vec<(usize, usize)> = [(0i32, -1i32), (0, 1), (-1, 0), (1, 0)]
                .iter()
                .filter_map(|&(dx, dy)| {
                    let (nx, ny) = (cx as i32 + dx, cy as i32 + dy);
                    (nx >= 0 && ny >= 0 && (nx as usize) < cells_x && (ny as usize) < cells_y)
                        .then_some((nx as usize, ny as usize))
                })
                .filter(|c| !visited.contains(c))
                .collect();
            if next.is_empty() {
                stack.pop();
                continue;
            }
            next.shuffle(&mut rng);
            let (nx, ny) = next[0];
            open(&mut walls, 2 * nx + 1, 2 * ny + 1);
            open(&mut walls, cx + nx + 1, cy + ny + 1);
            visited.insert((nx, ny));
            stack.push((nx, ny));
        }
        let mut knocked = 0;
        let mut attempts = 0;
        while knocked < loops && attempts < 100 * (loops + 1) {
            attempts += 1;
            let x = rng.random_range(1..width - 1);
            let y = rng.random_range(1..height - 1);
            // wall segments between two cells sit at exactly one even coordinate
            let between = (x % 2 == 0) != (y % 2 == 0);
            if between && walls[y * width + x] {
                open(&mut walls, x, y);
                knocked += 1;
            }
        }
        MazeLayout {
            width,
            height,
            walls,
            start: (1, 1),
            goal: (width as i32 - 2, height as i32 - 2),
        }
    }

    /// Surround with an extra wall column on the right and row at the bottom.
    pub fn padded(&self) -> MazeLayout {
        let (width, height) = (self.width + 1, self.height + 1);
        let mut walls = vec![true; width * height];
        for y in 0..self.height {
            for x in 0..self.width {
                walls[y * width + x] = self.walls[y * self.width + x];
            }
        }
        MazeLayout {
            width,
            height,
            walls,
            ..*self
        }
    }
}

fn reversed(moves: &[(i32, i32)]) -> Vec<(i32, i32)> {
    moves.iter().map(|&(dx, dy)| (-dx, -dy)).collect()
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let ch = if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.is_wall((x, y)) {
                    '#'
                } else {
                    '.'
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STANDARD: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

    #[test]
    fn parse_and_render_round_trip() {
        let text = "#####\n#S..#\n#.#G#\n#####\n";
        let layout = MazeLayout::parse(text).unwrap();
        assert_eq!((layout.width, layout.height), (5, 4));
        assert_eq!(layout.start, (1, 1));
        assert_eq!(layout.goal, (3, 2));
        assert!(layout.is_wall((2, 2)));
        assert!(layout.is_wall((-1, 0)));
        assert_eq!(layout.to_string(), text);
    }

    #[test]
    fn malformed_layouts_are_rejected() {
        assert!(MazeLayout::parse("").is_err());
        assert!(MazeLayout::parse("#S#\n#.\n#G#").is_err());
        assert!(MazeLayout::parse("#S.\n#x#\n#G#").is_err());
        assert!(MazeLayout::parse("#S.S\n..G.").is_err());
        assert!(MazeLayout::parse("#S..\n....").is_err());
    }

    #[test]
    fn displacement_checks_intermediate_cells() {
        let layout = MazeLayout::parse("#####\n#S#G#\n#...#\n#####").unwrap();
        assert_eq!(layout.displace((1, 1), (2, 0)), None);
        assert_eq!(layout.displace((1, 2), (2, 0)), Some((3, 2)));
        assert_eq!(layout.displace((1, 1), (0, -1)), None);
    }

    #[test]
    fn generated_maze_is_connected() {
        let layout = MazeLayout::generate(7, 7, 3, 42);
        assert_eq!((layout.width, layout.height), (15, 15));
        let dist = layout.distances(layout.start, &STANDARD);
        for c in layout.free_cells() {
            assert!(dist[c.1 as usize * 15 + c.0 as usize].is_some(), "{c:?}");
        }
    }

    #[test]
    fn shortest_path_matches_distance() {
        let layout = MazeLayout::builtin("maze15").unwrap();
        let len = layout.shortest_path_len(&STANDARD).unwrap();
        let path = layout.shortest_path(&STANDARD).unwrap();
        assert_eq!(path.len(), len + 1);
        assert_eq!(path[0], layout.start);
        assert_eq!(*path.last().unwrap(), layout.goal);
    }
}
