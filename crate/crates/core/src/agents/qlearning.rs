use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::AgentLearner;
use crate::error::{Error, Result};
use crate::mdp::argmax_lex;
use crate::rng::{stream_rng, SimRng};

/// Step size schedule. `Polynomial` uses `base / n^power` where `n` counts
/// updates of the `(h, s, a)` entry, capped at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    Constant(f64),
    Polynomial { base: f64, power: f64 },
}

/// Exploration rate for episode `k` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exploration {
    /// `max(floor, initial * decay^k)`
    Geometric { initial: f64, decay: f64, floor: f64 },
    /// `min(1, initial / (k + 1)^power)`
    Polynomial { initial: f64, power: f64 },
}

impl Exploration {
    pub fn epsilon(&self, episode: u64) -> f64 {
        match *self {
            Exploration::Geometric {
                initial,
                decay,
                floor,
            } => (initial * decay.powf(episode as f64)).max(floor),
            Exploration::Polynomial { initial, power } => {
                (initial / ((episode + 1) as f64).powf(power)).min(1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearningConfig {
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    /// Initial table value; `None` means the horizon.
    pub optimistic_init: Option<f64>,
    /// Learn base-reward values and add the offered payment when choosing.
    pub transfer_aware: bool,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            learning_rate: LearningRate::Constant(0.1),
            exploration: Exploration::Geometric {
                initial: 1.0,
                decay: 0.999,
                floor: 0.05,
            },
            optimistic_init: None,
            transfer_aware: false,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = match self.learning_rate {
            LearningRate::Constant(r) => r > 0.0 && r <= 1.0,
            LearningRate::Polynomial { base, power } => base > 0.0 && base <= 1.0 && power >= 0.0,
        };
        if !lr_ok {
            return Err(Error::config("learning rate must lie in (0,1]"));
        }
        let eps_ok = match self.exploration {
            Exploration::Geometric {
                initial,
                decay,
                floor,
            } => {
                (0.0..=1.0).contains(&initial)
                    && (0.0..=1.0).contains(&decay)
                    && (0.0..=1.0).contains(&floor)
            }
            Exploration::Polynomial { initial, power } => {
                (0.0..=1.0).contains(&initial) && power >= 0.0
            }
        };
        if !eps_ok {
            return Err(Error::config("exploration parameters must keep epsilon in [0,1]"));
        }
        if self.optimistic_init.is_some_and(|v| !v.is_finite()) {
            return Err(Error::config("optimistic_init must be finite"));
        }
        Ok(())
    }
}

/// Epsilon-greedy tabular Q-learning over step-indexed values.
#[derive(Clone, Debug)]
pub struct QLearningAgent {
    cfg: QLearningConfig,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    q: Vec<f64>,
    visits: Vec<u32>,
    episode: u64,
    epsilon: f64,
    last_offer: Vec<f64>,
    rng: SimRng,
}

impl QLearningAgent {
    pub fn new(
        cfg: QLearningConfig,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::config("S, K and H must be positive"));
        }
        let init = cfg.optimistic_init.unwrap_or(horizon as f64);
        let n = horizon * num_states * num_actions;
        Ok(QLearningAgent {
            epsilon: cfg.exploration.epsilon(0),
            cfg,
            horizon,
            num_states,
            num_actions,
            q: vec![init; n],
            visits: vec![0; n],
            episode: 0,
            last_offer: vec![0.0; num_actions],
            rng: stream_rng(seed, 1),
        })
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.idx(h, s, a)]
    }

    pub fn set_q(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let i = self.idx(h, s, a);
        self.q[i] = value;
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn decision_values(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64> {
        let start = self.idx(h, s, 0);
        let row = &self.q[start..start + self.num_actions];
        if self.cfg.transfer_aware {
            row.iter().zip(offered).map(|(q, t)| q + t).collect()
        } else {
            row.to_vec()
        }
    }

    fn step_size(&self, n: u32) -> f64 {
        match self.cfg.learning_rate {
            LearningRate::Constant(r) => r,
            LearningRate::Polynomial { base, power } => (base / (n as f64).powf(power)).min(1.0),
        }
    }
}

impl AgentLearner for QLearningAgent {
    fn act(&mut self, h: usize, s: usize, offered: &[f64]) -> usize {
        self.last_offer.copy_from_slice(offered);
        let explore = self.rng.random::<f64>() < self.epsilon;
        if explore {
            self.rng.random_range(0..self.num_actions)
        } else {
            argmax_lex(&self.decision_values(h, s, offered))
        }
    }

    fn observe(&mut self, h: usize, s: usize, a: usize, reward: f64, next: usize) {
        let reward = if self.cfg.transfer_aware {
            reward - self.last_offer[a]
        } else {
            reward
        };
        let cont = if h + 1 < self.horizon {
            let start = self.idx(h + 1, next, 0);
            self.q[start..start + self.num_actions]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            0.0
        };
        let i = self.idx(h, s, a);
        self.visits[i] += 1;
        let lr = self.step_size(self.visits[i]);
        self.q[i] += lr * (reward + cont - self.q[i]);
    }

    fn end_episode(&mut self) {
        self.episode += 1;
        self.epsilon = self.cfg.exploration.epsilon(self.episode);
    }

    fn action_distribution(&self, h: usize, s: usize, offered: &[f64]) -> Vec<f64> {
        let k = self.num_actions as f64;
        let mut d = vec![self.epsilon / k; self.num_actions];
        d[argmax_lex(&self.decision_values(h, s, offered))] += 1.0 - self.epsilon;
        d
    }
}
