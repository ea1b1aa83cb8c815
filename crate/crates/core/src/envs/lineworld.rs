//! Line-world with a pollution externality.
//!
//! The agent walks from position 0 toward a goal at the end of a line. Each
//! action moves it forward and changes a pollution stock that lives in the
//! state. The agent only cares about its own step rewards and reaching the
//! goal; the principal's reward falls linearly in the pollution stock, per
//! step and again on the final step.
//!
//! The goal is absorbing in position only. Actions taken there still move the
//! pollution stock, so emissions keep mattering after the agent has arrived.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, TransferPolicy};

pub const FAST: usize = 0;
pub const SLOW: usize = 1;
pub const DETOUR: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionEffect {
    pub advance: usize,
    pub pollution_delta: i64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineWorldConfig {
    pub num_positions: usize,
    pub horizon: usize,
    pub pollution_cap: usize,
    pub fast: ActionEffect,
    pub slow: ActionEffect,
    pub detour: ActionEffect,
    /// Agent reward per step spent at the goal.
    pub goal_reward: f64,
    pub subsidy_enabled: bool,
    /// Flat transfer on the detour action when the subsidy is enabled.
    pub subsidy: f64,
    /// Upper bound on `S * K * H`.
    pub max_table_size: usize,
}

impl Default for LineWorldConfig {
    fn default() -> Self {
        LineWorldConfig {
            num_positions: 8,
            horizon: 12,
            pollution_cap: 20,
            fast: ActionEffect {
                advance: 2,
                pollution_delta: 2,
                reward: 0.9,
            },
            slow: ActionEffect {
                advance: 1,
                pollution_delta: 1,
                reward: 0.6,
            },
            detour: ActionEffect {
                advance: 1,
                pollution_delta: -2,
                reward: 0.3,
            },
            goal_reward: 1.0,
            subsidy_enabled: false,
            subsidy: 0.65,
            max_table_size: 5_000_000,
        }
    }
}

impl LineWorldConfig {
    pub fn with_subsidy(mut self) -> Self {
        self.subsidy_enabled = true;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_positions * (self.pollution_cap + 1)
    }

    pub fn encode(&self, position: usize, pollution: usize) -> usize {
        position * (self.pollution_cap + 1) + pollution
    }

    /// `(position, pollution)` of a state index.
    pub fn decode(&self, s: usize) -> (usize, usize) {
        (s / (self.pollution_cap + 1), s % (self.pollution_cap + 1))
    }

    pub fn pollution_of(&self, s: usize) -> usize {
        self.decode(s).1
    }

    pub fn goal(&self) -> usize {
        self.num_positions - 1
    }

    fn effects(&self) -> [ActionEffect; 3] {
        [self.fast, self.slow, self.detour]
    }

    /// Successor state of `(s, a)`; dynamics are deterministic.
    pub fn successor(&self, s: usize, a: usize) -> usize {
        let (pos, pol) = self.decode(s);
        let e = self.effects()[a];
        let pos = if pos == self.goal() {
            pos
        } else {
            (pos + e.advance).min(self.goal())
        };
        let pol = (pol as i64 + e.pollution_delta).clamp(0, self.pollution_cap as i64) as usize;
        self.encode(pos, pol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_positions < 2 || self.horizon == 0 || self.pollution_cap == 0 {
            return Err(Error::config(
                "line-world needs at least 2 positions, a positive horizon and a positive pollution cap",
            ));
        }
        let rewards = self.effects().map(|e| e.reward);
        if rewards
            .iter()
            .chain([&self.goal_reward])
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::config("line-world rewards must lie in [0,1]"));
        }
        if !(self.subsidy >= 0.0) || !self.subsidy.is_finite() {
            return Err(Error::config("subsidy must be finite and nonnegative"));
        }
        let size = self.num_states().saturating_mul(3).saturating_mul(self.horizon);
        if size > self.max_table_size {
            return Err(Error::config(format!(
                "line-world table size {size} exceeds the cap {}",
                self.max_table_size
            )));
        }
        Ok(())
    }
}

/// Encodes the line-world as a [`FiniteMdp`] over (position, pollution) states.
pub fn build_lineworld(cfg: &LineWorldConfig) -> Result<FiniteMdp> {
    cfg.validate()?;
    let n = cfg.num_states();
    let cap = cfg.pollution_cap as f64;
    let effects = cfg.effects();
    let mut p = Vec::with_capacity(n);
    let mut r_a = Vec::with_capacity(n);
    let mut r_p = Vec::with_capacity(n);
    for s in 0..n {
        let at_goal = cfg.decode(s).0 == cfg.goal();
        let mut p_row = Vec::with_capacity(3);
        let mut ra_row = Vec::with_capacity(3);
        let mut rp_row = Vec::with_capacity(3);
        for (a, e) in effects.iter().enumerate() {
            let next = cfg.successor(s, a);
            let mut dist = vec![0.0; n];
            dist[next] = 1.0;
            p_row.push(dist);
            ra_row.push(if at_goal { cfg.goal_reward } else { e.reward });
            rp_row.push(1.0 - cfg.pollution_of(next) as f64 / cap);
        }
        p.push(p_row);
        r_a.push(ra_row);
        r_p.push(rp_row);
    }
    let mut rho0 = vec![0.0; n];
    rho0[cfg.encode(0, 0)] = 1.0;
    let terminal = r_p.clone();
    FiniteMdp::new(cfg.horizon, p, r_a, r_p, rho0)?.with_terminal_principal(terminal)
}

/// Stationary flat subsidy on the detour action in every state.
pub fn build_subsidy_policy(cfg: &LineWorldConfig) -> Result<TransferPolicy> {
    if !cfg.subsidy_enabled {
        return Err(Error::config("subsidy is not enabled in this line-world config"));
    }
    cfg.validate()?;
    let row = [0.0, 0.0, cfg.subsidy];
    let table = vec![row.to_vec(); cfg.num_states()];
    TransferPolicy::stationary(cfg.horizon, &table)
}
