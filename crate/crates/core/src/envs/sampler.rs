use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::FiniteMdp;
use crate::rng::{stream_rng, SimRng};

/// How realized rewards relate to the reward tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNoise {
    /// Realized reward equals the table entry.
    #[default]
    Deterministic,
    /// Each reward component is a Bernoulli draw with the table entry as mean.
    Bernoulli,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub reward_agent: f64,
    pub reward_principal: f64,
    pub next: usize,
}

/// Maps a final state to a scalar reported alongside each episode.
pub type TerminalLabel = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Samples episodes from a known MDP. Neither player reads the MDP through
/// this type; it only hands out states and realized rewards.
#[derive(Clone)]
pub struct Environment {
    mdp: Arc<FiniteMdp>,
    noise: RewardNoise,
    seed: u64,
    rng: SimRng,
    label: Option<TerminalLabel>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("noise", &self.noise)
            .field("seed", &self.seed)
            .field("labelled", &self.label.is_some())
            .finish_non_exhaustive()
    }
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl Environment {
    pub fn new(mdp: Arc<FiniteMdp>, seed: u64) -> Self {
        Environment {
            mdp,
            noise: RewardNoise::Deterministic,
            seed,
            rng: stream_rng(seed, 0),
            label: None,
        }
    }

    /// Attaches a label computed from each episode's final state.
    pub fn with_terminal_label(mut self, label: TerminalLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn terminal_label(&self, s: usize) -> Option<f64> {
        self.label.as_ref().map(|f| f(s))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> RewardNoise {
        self.noise
    }

    pub fn with_noise(mut self, noise: RewardNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn shared_mdp(&self) -> Arc<FiniteMdp> {
        Arc::clone(&self.mdp)
    }

    pub fn reset(&mut self) -> usize {
        sample_index(self.mdp.initial_distribution(), &mut self.rng)
    }

    pub fn step(&mut self, h: usize, s: usize, a: usize) -> Transition {
        let next = sample_index(self.mdp.next_dist(s, a), &mut self.rng);
        let (ra, rp) = (self.mdp.reward_agent(s, a), self.mdp.reward_principal(h, s, a));
        let (reward_agent, reward_principal) = match self.noise {
            RewardNoise::Deterministic => (ra, rp),
            RewardNoise::Bernoulli => {
                let ra = self.bernoulli(ra);
                // a final-step term can lift the mean above 1; draw each unit separately
                let whole = rp.floor();
                (ra, whole + self.bernoulli(rp - whole))
            }
        };
        Transition {
            reward_agent,
            reward_principal,
            next,
        }
    }

    fn bernoulli(&mut self, p: f64) -> f64 {
        if self.rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain_mdp;

    #[test]
    fn deterministic_chain_follows_table() {
        let mut env = Environment::new(Arc::new(chain_mdp()), 3);
        assert_eq!(env.reset(), 0);
        let t = env.step(0, 0, 1);
        assert_eq!(t.next, 1);
        assert_eq!(t.reward_agent, 0.0);
        let t = env.step(1, 1, 0);
        assert_eq!((t.next, t.reward_agent), (1, 1.0));
    }

    #[test]
    fn bernoulli_rewards_have_table_mean() {
        let mdp = FiniteMdp::new(1, vec![vec![vec![1.0]]], vec![vec![0.3]], vec![vec![0.7]], vec![1.0]).unwrap();
        let mut env = Environment::new(Arc::new(mdp), 11).with_noise(RewardNoise::Bernoulli);
        let n = 20_000;
        let (mut sa, mut sp) = (0.0, 0.0);
        for _ in 0..n {
            let t = env.step(0, 0, 0);
            sa += t.reward_agent;
            sp += t.reward_principal;
        }
        assert!((sa / n as f64 - 0.3).abs() < 4.0 * (0.21f64 / n as f64).sqrt());
        assert!((sp / n as f64 - 0.7).abs() < 4.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn sample_index_respects_zero_mass() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
