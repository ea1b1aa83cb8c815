use std::sync::Arc;

use crate::agents::AgentLearner;
use crate::mdp::{value_iteration, FiniteMdp, TransferPolicy, ValueSolution};

/// Fully informed agent that best-responds to each episode's transfers by
/// planning on `r_a + tau`.
#[derive(Clone, Debug)]
pub struct OracleAgent {
    mdp: Arc<FiniteMdp>,
    transfers: TransferPolicy,
    solution: ValueSolution,
}

impl OracleAgent {
    pub fn new(mdp: Arc<FiniteMdp>) -> Self {
        let transfers = TransferPolicy::zeros_for(&mdp);
        let solution = Self::plan(&mdp, &transfers);
        OracleAgent {
            mdp,
            transfers,
            solution,
        }
    }

    fn plan(mdp: &FiniteMdp, transfers: &TransferPolicy) -> ValueSolution {
        value_iteration(mdp, &mdp.agent_rewards(), Some(transfers))
            .expect("transfers are validated against the MDP")
    }

    pub fn solution(&self) -> &ValueSolution {
        &self.solution
    }
}

impl AgentLearner for OracleAgent {
    fn begin_episode(&mut self, transfers: &TransferPolicy) {
        if *transfers != self.transfers {
            self.solution = Self::plan(&self.mdp, transfers);
            self.transfers = transfers.clone();
        }
    }

    fn act(&mut self, h: usize, s: usize, _offered: &[f64]) -> usize {
        self.solution.greedy(h, s)
    }

    fn observe(&mut self, _h: usize, _s: usize, _a: usize, _reward: f64, _next: usize) {}

    fn action_distribution(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; offered.len()];
        d[self.solution.greedy(h, s)] = 1.0;
        d
    }
}
