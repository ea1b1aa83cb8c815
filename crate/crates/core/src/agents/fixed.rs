use crate::agents::AgentLearner;
use crate::mdp::DeterministicPolicy;

/// Plays a fixed deterministic policy and ignores all incentives.
#[derive(Clone, Debug)]
pub struct FixedPolicyAgent {
    policy: DeterministicPolicy,
}

impl FixedPolicyAgent {
    pub fn new(policy: DeterministicPolicy) -> Self {
        FixedPolicyAgent { policy }
    }

    /// Plays action `a` everywhere.
    pub fn constant(horizon: usize, num_states: usize, a: usize) -> Self {
        Self::new(DeterministicPolicy::new(num_states, vec![a; horizon * num_states]))
    }
}

impl AgentLearner for FixedPolicyAgent {
    fn act(&mut self, h: usize, s: usize, _offered: &[f64]) -> usize {
        self.policy.action(h, s)
    }

    fn observe(&mut self, _h: usize, _s: usize, _a: usize, _reward: f64, _next: usize) {}

    fn action_distribution(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; offered.len()];
        d[self.policy.action(h, s)] = 1.0;
        d
    }
}
