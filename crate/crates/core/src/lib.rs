//! Deep implicit imitation Q-learning.
//!
//! DQN/DDQN with prioritized replay, extended with an observation-only
//! expert dataset whose missing actions are inferred from the agent's own
//! transitions (DIIQN), and with bridge repair for expert transitions the
//! agent cannot execute (HA-DIIQN).

pub mod bridge;
pub mod confidence;
pub mod demos;
pub mod distance;
pub mod envs;
pub mod expert;
pub mod harness;
pub mod learner;
pub mod nn;
pub mod replay;
