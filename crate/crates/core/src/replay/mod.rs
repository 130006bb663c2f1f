//! Proportional prioritized experience replay.
//!
//! Raw priorities `|td| + eps` are stored per slot; the sum tree holds
//! `priority^alpha` and is rebuilt whenever a different `alpha` is requested.

mod sum_tree;

use rand::Rng;
use thiserror::Error;

use crate::envs::StateVec;

pub use sum_tree::SumTree;

/// Floor added to every absolute TD error so that no stored sample starves.
pub const PRIORITY_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("replay capacity must be > 0")]
    ZeroCapacity,
    #[error("batch of {batch} requested from a memory holding {size}")]
    BatchTooLarge { batch: usize, size: usize },
    #[error("replay index {index} out of range for size {size}")]
    InvalidIndex { index: usize, size: usize },
    #[error("{indices} indices but {errors} TD errors")]
    LengthMismatch { indices: usize, errors: usize },
    #[error("TD error {0} is not finite")]
    NonFiniteTd(f64),
    #[error("alpha {0} must be finite and >= 0")]
    InvalidAlpha(f64),
}

/// An agent transition, optionally paired with an expert record.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedExperience {
    pub s_a: StateVec,
    pub a_a: usize,
    pub r: f32,
    pub s_a_next: StateVec,
    pub done: bool,
    pub expert_ref: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub index: usize,
    pub is_weight: f32,
}

/// Linear importance-sampling exponent schedule, clamped at both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl BetaSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if self.steps == 0 || t >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * t as f64 / self.steps as f64
    }
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            start: 0.4,
            end: 1.0,
            steps: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    capacity: usize,
    items: Vec<AugmentedExperience>,
    raw: Vec<f64>,
    tree: SumTree,
    alpha: f64,
    next: usize,
    max_priority: f64,
    pushes: u64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ReplayError::InvalidAlpha(alpha));
        }
        Ok(PrioritizedReplay {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            raw: Vec::with_capacity(capacity.min(1 << 20)),
            tree: SumTree::new(capacity),
            alpha,
            next: 0,
            max_priority: 1.0,
            pushes: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&AugmentedExperience> {
        self.items.get(index)
    }

    pub fn priority(&self, index: usize) -> Option<f64> {
        self.raw.get(index).copied()
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &AugmentedExperience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Insert with the running maximum priority, overwriting the oldest slot
    /// once full. Returns the slot used.
    pub fn push(&mut self, exp: AugmentedExperience) -> usize {
        let slot = self.next;
        if slot == self.items.len() {
            self.items.push(exp);
            self.raw.push(self.max_priority);
        } else {
            self.items[slot] = exp;
            self.raw[slot] = self.max_priority;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        self.pushes += 1;
        slot
    }

    fn set_alpha(&mut self, alpha: f64) -> Result<(), ReplayError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ReplayError::InvalidAlpha(alpha));
        }
        if alpha != self.alpha {
            self.alpha = alpha;
            for (i, p) in self.raw.iter().enumerate() {
                self.tree.set(i, p.powf(alpha));
            }
        }
        Ok(())
    }

    /// Stratified proportional sample of `batch` slots.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        batch: usize,
        alpha: f64,
        beta: f64,
        rng: &mut R,
    ) -> Result<Vec<Sampled>, ReplayError> {
        let uniforms: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
        self.sample_with_uniforms(batch, alpha, beta, &uniforms)
    }

    /// [`sample`](Self::sample) with the per-stratum uniforms supplied by the
    /// caller; stratum `i` maps `u_i` to mass `(i + u_i) * total / batch`.
    pub fn sample_with_uniforms(
        &mut self,
        batch: usize,
        alpha: f64,
        beta: f64,
        uniforms: &[f64],
    ) -> Result<Vec<Sampled>, ReplayError> {
        let size = self.items.len();
        if batch > size || batch == 0 {
            return Err(ReplayError::BatchTooLarge { batch, size });
        }
        self.set_alpha(alpha)?;
        let total = self.tree.total();
        let segment = total / batch as f64;
        let mut picked: Vec<(usize, f64)> = uniforms
            .iter()
            .take(batch)
            .enumerate()
            .map(|(i, u)| {
                let leaf = self.tree.find((i as f64 + u) * segment).min(size - 1);
                let weight = (size as f64 * self.tree.get(leaf) / total).powf(-beta);
                (leaf, weight)
            })
            .collect();
        let max_w = picked.iter().map(|p| p.1).fold(0.0, f64::max);
        for p in &mut picked {
            p.1 /= max_w;
        }
        Ok(picked
            .into_iter()
            .map(|(index, w)| Sampled {
                index,
                is_weight: w as f32,
            })
            .collect())
    }

    /// Set priorities to `|td| + eps`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<(), ReplayError> {
        if indices.len() != td_errors.len() {
            return Err(ReplayError::LengthMismatch {
                indices: indices.len(),
                errors: td_errors.len(),
            });
        }
        let size = self.items.len();
        for (&index, &td) in indices.iter().zip(td_errors) {
            if index >= size {
                return Err(ReplayError::InvalidIndex { index, size });
            }
            if !td.is_finite() {
                return Err(ReplayError::NonFiniteTd(td));
            }
        }
        for (&index, &td) in indices.iter().zip(td_errors) {
            let p = td.abs() + PRIORITY_EPS;
            self.raw[index] = p;
            self.tree.set(index, p.powf(self.alpha));
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }
}
