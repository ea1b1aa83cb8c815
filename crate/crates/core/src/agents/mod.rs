//! Agent behavior models and measurement of their hindsight rationality.

mod fixed;
mod oracle;
mod qlearning;
mod rationality;

pub use fixed::FixedPolicyAgent;
pub use oracle::OracleAgent;
pub use qlearning::{Exploration, LearningRate, QLearningAgent, QLearningConfig};
pub use rationality::{fit_loglog_slope, measure_rationality, RationalityProfile};

use crate::mdp::TransferPolicy;

/// What the principal can rely on from an agent: it reacts to offers and
/// learns from experience. The principal never looks inside.
pub trait AgentLearner: Send {
    /// Called once per episode with the transfer policy the principal commits to.
    fn begin_episode(&mut self, _transfers: &TransferPolicy) {}

    /// Chooses an action in `[0, K)` at step `h` in state `s` given the
    /// payments offered for each action there.
    fn act(&mut self, h: usize, s: usize, offered: &[f64]) -> usize;

    /// Feedback after acting; `reward` includes any transfer received.
    fn observe(&mut self, h: usize, s: usize, a: usize, reward: f64, next: usize);

    fn end_episode(&mut self) {}

    /// The distribution `act` currently draws from at `(h, s)`.
    fn action_distribution(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64>;
}

impl<A: AgentLearner + ?Sized> AgentLearner for Box<A> {
    fn begin_episode(&mut self, transfers: &TransferPolicy) {
        (**self).begin_episode(transfers)
    }

    fn act(&mut self, h: usize, s: usize, offered: &[f64]) -> usize {
        (**self).act(h, s, offered)
    }

    fn observe(&mut self, h: usize, s: usize, a: usize, reward: f64, next: usize) {
        (**self).observe(h, s, a, reward, next)
    }

    fn end_episode(&mut self) {
        (**self).end_episode()
    }

    fn action_distribution(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64> {
        (**self).action_distribution(h, s, offered)
    }
}
