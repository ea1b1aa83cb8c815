//! Single-episode interaction loop shared by every scenario.

use crate::agents::AgentLearner;
use crate::envs::Environment;
use crate::mdp::{Step, TransferPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Vec<Step>,
    /// Realized agent reward plus transfers received.
    pub agent_return: f64,
    /// Realized principal reward minus transfers paid.
    pub principal_return: f64,
    /// Realized base rewards of both players.
    pub welfare: f64,
    /// Realized base rewards `(agent, principal)` per step, transfers excluded.
    pub step_rewards: Vec<(f64, f64)>,
    /// State reached after the final step.
    pub final_state: usize,
    /// The environment's label of the final state, if it defines one.
    pub terminal_label: Option<f64>,
}

/// Announces `transfers` to the agent and plays one episode.
pub fn run_episode(
    env: &mut Environment,
    agent: &mut dyn AgentLearner,
    transfers: &TransferPolicy,
) -> EpisodeOutcome {
    agent.begin_episode(transfers);
    play_announced(env, agent, transfers)
}

/// Plays an episode whose transfers were already announced via `begin_episode`.
pub(crate) fn play_announced(
    env: &mut Environment,
    agent: &mut dyn AgentLearner,
    transfers: &TransferPolicy,
) -> EpisodeOutcome {
    let horizon = env.mdp().horizon();
    let mut trajectory = Vec::with_capacity(horizon);
    let mut step_rewards = Vec::with_capacity(horizon);
    let (mut agent_return, mut principal_return, mut welfare) = (0.0, 0.0, 0.0);
    let mut s = env.reset();
    for h in 0..horizon {
        let a = agent.act(h, s, transfers.offered(h, s));
        let tr = env.step(h, s, a);
        let paid = transfers.get(h, s, a);
        agent.observe(h, s, a, tr.reward_agent + paid, tr.next);
        agent_return += tr.reward_agent + paid;
        principal_return += tr.reward_principal - paid;
        welfare += tr.reward_agent + tr.reward_principal;
        trajectory.push(Step { h, s, a });
        step_rewards.push((tr.reward_agent, tr.reward_principal));
        s = tr.next;
    }
    agent.end_episode();
    EpisodeOutcome {
        trajectory,
        agent_return,
        principal_return,
        welfare,
        step_rewards,
        final_state: s,
        terminal_label: env.terminal_label(s),
    }
}
