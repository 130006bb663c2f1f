use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, Environment, ReturnBounds, StateVec, Step};

/// With probability `prob` the previously executed action replaces the
/// chosen one.
pub struct Sticky {
    inner: Box<dyn Environment>,
    prob: f32,
    rng: ChaCha8Rng,
    previous: Option<usize>,
}

impl Sticky {
    pub fn new(inner: Box<dyn Environment>, prob: f32, seed: u64) -> Self {
        Sticky {
            inner,
            prob,
            rng: ChaCha8Rng::seed_from_u64(seed),
            previous: None,
        }
    }
}

impl Environment for Sticky {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self) -> StateVec {
        self.previous = None;
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if action >= self.num_actions() {
            return Err(EnvError::InvalidAction {
                action,
                actions: self.num_actions(),
            });
        }
        let executed = match self.previous {
            Some(prev) if self.prob > 0.0 && self.rng.random::<f32>() < self.prob => prev,
            _ => action,
        };
        let step = self.inner.step(executed)?;
        self.previous = Some(executed);
        Ok(step)
    }

    fn return_bounds(&self) -> ReturnBounds {
        self.inner.return_bounds()
    }

    fn render(&self) -> String {
        self.inner.render()
    }
}
