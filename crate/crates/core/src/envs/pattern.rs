use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternName {
    Standard,
    Modified,
    Orthogonal,
    Diagonal,
    Custom,
}

/// An action set: one displacement (grid mazes) or force direction
/// (point-mass) per action index.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPattern {
    pub name: PatternName,
    pub moves: Vec<(f32, f32)>,
}

impl ActionPattern {
    /// Up, down, left, right (y grows downwards).
    pub fn standard() -> Self {
        ActionPattern {
            name: PatternName::Standard,
            moves: vec![(0.0, -1.0), (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)],
        }
    }

    /// Up, down, and two-cell jumps left and right.
    pub fn modified() -> Self {
        ActionPattern {
            name: PatternName::Modified,
            moves: vec![(0.0, -1.0), (0.0, 1.0), (-2.0, 0.0), (2.0, 0.0)],
        }
    }

    /// No-op plus four axis-aligned unit forces.
    pub fn orthogonal() -> Self {
        ActionPattern {
            name: PatternName::Orthogonal,
            moves: vec![(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)],
        }
    }

    /// No-op plus four diagonal unit forces.
    pub fn diagonal() -> Self {
        let h = std::f32::consts::FRAC_1_SQRT_2;
        ActionPattern {
            name: PatternName::Diagonal,
            moves: vec![(0.0, 0.0), (-h, -h), (h, -h), (-h, h), (h, h)],
        }
    }

    pub fn custom(moves: Vec<(f32, f32)>) -> Result<Self, EnvError> {
        let pattern = ActionPattern {
            name: PatternName::Custom,
            moves,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.moves.is_empty() {
            return Err(EnvError::Pattern("empty action pattern".into()));
        }
        for (i, a) in self.moves.iter().enumerate() {
            if !(a.0.is_finite() && a.1.is_finite()) {
                return Err(EnvError::Pattern(format!("move {i} is not finite")));
            }
            if self.moves[..i].contains(a) {
                return Err(EnvError::Pattern(format!("duplicate move {a:?}")));
            }
        }
        Ok(())
    }

    /// Integer displacements for grid mazes.
    pub fn grid_moves(&self) -> Result<Vec<(i32, i32)>, EnvError> {
        self.moves
            .iter()
            .map(|&(dx, dy)| {
                if dx.fract() == 0.0 && dy.fract() == 0.0 {
                    Ok((dx as i32, dy as i32))
                } else {
                    Err(EnvError::Pattern(format!(
                        "move ({dx}, {dy}) is not an integer displacement"
                    )))
                }
            })
            .collect()
    }

    /// Moves shared with `other`, optionally ignoring the zero move.
    pub fn intersection(&self, other: &ActionPattern, ignore_noop: bool) -> Vec<(f32, f32)> {
        self.moves
            .iter()
            .filter(|m| !(ignore_noop && **m == (0.0, 0.0)))
            .filter(|m| other.moves.contains(m))
            .copied()
            .collect()
    }
}

/// Accepts `standard`, `modified`, `orthogonal`, `diagonal`, or an explicit
/// list such as `0,-1; 0,1; -2,0; 2,0`.
impl FromStr for ActionPattern {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "standard" => Ok(Self::standard()),
            "modified" => Ok(Self::modified()),
            "orthogonal" => Ok(Self::orthogonal()),
            "diagonal" => Ok(Self::diagonal()),
            list => {
                let moves = list
                    .split(';')
                    .map(|pair| {
                        let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
                        match parts.as_slice() {
                            [x, y] => match (x.parse::<f32>(), y.parse::<f32>()) {
                                (Ok(x), Ok(y)) => Ok((x, y)),
                                _ => Err(EnvError::Pattern(format!("bad move {pair:?}"))),
                            },
                            _ => Err(EnvError::Pattern(format!("bad move {pair:?}"))),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::custom(moves)
            }
        }
    }
}

impl fmt::Display for ActionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name {
            PatternName::Standard => write!(f, "standard"),
            PatternName::Modified => write!(f, "modified"),
            PatternName::Orthogonal => write!(f, "orthogonal"),
            PatternName::Diagonal => write!(f, "diagonal"),
            PatternName::Custom => {
                let parts: Vec<String> = self.moves.iter().map(|(x, y)| format!("{x},{y}")).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}
