//! Transfer estimation by batched binary search.
//!
//! For each target `(h, s, a)` the principal keeps an interval known to
//! contain the minimal transfer. Each batch offers the midpoint on `a` alone,
//! counts how often the agent takes `a` when it is in `s`, and keeps the half
//! the verdict points to. Targets take turns batch by batch. The estimate is
//! the upper end of the final interval, so it never underpays.

use serde::{Deserialize, Serialize};

use crate::agents::AgentLearner;
use crate::envs::Environment;
use crate::episode::{run_episode, EpisodeOutcome};
use crate::error::{Error, Result};
use crate::mdp::TransferPolicy;

/// Whether estimates are indexed by step or shared across the horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    StepIndexed,
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase1Config {
    /// Batch length exponent: `L = ceil(T^alpha)`.
    pub alpha: f64,
    /// Target accuracy exponent: final width at most `T^-beta`.
    pub beta: f64,
    /// Total episode budget `T`.
    pub episodes: usize,
    /// Play frequency above which the offered transfer counts as sufficient.
    pub theta: f64,
    /// Initial upper end of every interval; `None` means the horizon.
    pub interval_max: Option<f64>,
    pub targets: TargetMode,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config {
            alpha: 0.5,
            beta: 0.25,
            episodes: 4096,
            theta: 0.5,
            interval_max: None,
            targets: TargetMode::StepIndexed,
        }
    }
}

// ceil that forgives floating error just above an integer
fn ceil_tight(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

impl Phase1Config {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.alpha) || !unit(self.beta) || !unit(self.theta) {
            return Err(Error::config("alpha, beta and theta must lie in (0,1)"));
        }
        if self.episodes == 0 {
            return Err(Error::config("phase 1 needs a positive episode budget"));
        }
        if self.interval_max.is_some_and(|w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::config("interval_max must be positive"));
        }
        Ok(())
    }

    pub fn batch_len(&self) -> usize {
        ceil_tight((self.episodes as f64).powf(self.alpha)).max(1)
    }

    pub fn width(&self, horizon: usize) -> f64 {
        self.interval_max.unwrap_or(horizon as f64)
    }

    /// Number of halvings needed to bring `width` below `T^-beta`.
    pub fn num_batches(&self, horizon: usize) -> usize {
        let w = self.width(horizon) * (self.episodes as f64).powf(self.beta);
        if w <= 1.0 {
            0
        } else {
            ceil_tight(w.log2())
        }
    }

    /// Warnings for exponent choices outside `kappa < alpha < 1`, `beta/alpha < 1 - kappa`.
    pub fn exponent_warnings(&self, kappa: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(kappa < self.alpha) {
            out.push(format!("alpha={} does not exceed agent kappa={kappa}", self.alpha));
        }
        if !(self.beta / self.alpha < 1.0 - kappa) {
            out.push(format!(
                "beta/alpha={} is not below 1-kappa={}",
                self.beta / self.alpha,
                1.0 - kappa
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Identifiability {
    Sufficient,
    Insufficient { starved: bool },
}

/// Decides whether the agent took the probed action often enough.
pub fn identifiability_test(visits: usize, plays_of_a: usize, theta: f64) -> Identifiability {
    if visits == 0 {
        return Identifiability::Insufficient { starved: true };
    }
    if plays_of_a as f64 / visits as f64 >= theta {
        Identifiability::Sufficient
    } else {
        Identifiability::Insufficient { starved: false }
    }
}

/// A probed `(s, a)`, at one step or at every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Target {
    pub step: Option<usize>,
    pub state: usize,
    pub action: usize,
}

impl Target {
    fn offer(&self, horizon: usize, num_states: usize, num_actions: usize, amount: f64) -> TransferPolicy {
        let mut t = TransferPolicy::zeros(horizon, num_states, num_actions);
        let steps = match self.step {
            Some(h) => h..h + 1,
            None => 0..horizon,
        };
        for h in steps {
            t.set(h, self.state, self.action, amount)
                .expect("midpoints are nonnegative");
        }
        t
    }

    fn tally(&self, outcome: &EpisodeOutcome) -> (usize, usize) {
        outcome
            .trajectory
            .iter()
            .filter(|st| st.s == self.state && self.step.is_none_or(|h| h == st.h))
            .fold((0, 0), |(v, p), st| (v + 1, p + usize::from(st.a == self.action)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Complete,
    /// A batch saw no visits to the target state; the search stopped there.
    Starved,
    /// The episode budget ran out before the search finished.
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetEstimate {
    pub target: Target,
    pub lo: f64,
    pub hi: f64,
    pub batches: usize,
    pub status: TargetStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchLog {
    pub target: Target,
    pub batch: usize,
    pub offered: f64,
    pub visits: usize,
    pub plays: usize,
    pub sufficient: bool,
}

#[derive(Clone, Debug)]
pub struct Phase1Outcome {
    /// Upper interval ends, written to every covered `(h, s, a)`.
    pub tau_hat: TransferPolicy,
    pub estimates: Vec<TargetEstimate>,
    pub episodes_used: usize,
    pub batch_log: Vec<BatchLog>,
    pub episodes: Vec<EpisodeOutcome>,
    /// Set when the budget ran out before every search finished.
    pub partial: bool,
}

impl Phase1Outcome {
    pub fn starved(&self) -> impl Iterator<Item = &TargetEstimate> {
        self.estimates.iter().filter(|e| e.status == TargetStatus::Starved)
    }
}

pub(crate) fn enumerate_targets(mode: TargetMode, horizon: usize, num_states: usize, num_actions: usize) -> Vec<Target> {
    let steps: Vec<Option<usize>> = match mode {
        TargetMode::StepIndexed => (0..horizon).map(Some).collect(),
        TargetMode::Stationary => vec![None],
    };
    let mut out = Vec::new();
    for step in steps {
        for state in 0..num_states {
            for action in 0..num_actions {
                out.push(Target { step, state, action });
            }
        }
    }
    out
}

/// Runs the batched binary search against `agent` through `env`.
///
/// The principal only sees trajectories: how often the agent was in the
/// target state and what it did there.
pub fn phase1_estimate(
    env: &mut Environment,
    agent: &mut dyn AgentLearner,
    cfg: &Phase1Config,
) -> Result<Phase1Outcome> {
    cfg.validate()?;
    let (hz, n, k) = {
        let m = env.mdp();
        (m.horizon(), m.num_states(), m.num_actions())
    };
    let batch_len = cfg.batch_len();
    let num_batches = cfg.num_batches(hz);
    let width = cfg.width(hz);
    let targets = enumerate_targets(cfg.targets, hz, n, k);
    let mut estimates: Vec<TargetEstimate> = targets
        .iter()
        .map(|&target| TargetEstimate {
            target,
            lo: 0.0,
            hi: width,
            batches: 0,
            status: TargetStatus::Complete,
        })
        .collect();
    let mut active = vec![true; targets.len()];
    let mut batch_log = Vec::new();
    let mut episodes = Vec::new();
    let mut partial = false;

    'rounds: for batch in 0..num_batches {
        for (i, est) in estimates.iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            if episodes.len() + batch_len > cfg.episodes {
                partial = true;
                break 'rounds;
            }
            let mid = 0.5 * (est.lo + est.hi);
            let offer = est.target.offer(hz, n, k, mid);
            let (mut visits, mut plays) = (0, 0);
            for _ in 0..batch_len {
                let out = run_episode(env, agent, &offer);
                let (v, p) = est.target.tally(&out);
                visits += v;
                plays += p;
                episodes.push(out);
            }
            let verdict = identifiability_test(visits, plays, cfg.theta);
            batch_log.push(BatchLog {
                target: est.target,
                batch,
                offered: mid,
                visits,
                plays,
                sufficient: verdict == Identifiability::Sufficient,
            });
            match verdict {
                Identifiability::Sufficient => est.hi = mid,
                Identifiability::Insufficient { starved: false } => est.lo = mid,
                Identifiability::Insufficient { starved: true } => {
                    est.status = TargetStatus::Starved;
                    active[i] = false;
                    continue;
                }
            }
            est.batches += 1;
        }
    }
    if partial {
        for (i, est) in estimates.iter_mut().enumerate() {
            if active[i] && est.batches < num_batches {
                est.status = TargetStatus::Partial;
            }
        }
    }

    let mut tau_hat = TransferPolicy::zeros(hz, n, k);
    for est in &estimates {
        let steps = match est.target.step {
            Some(h) => h..h + 1,
            None => 0..hz,
        };
        for h in steps {
            tau_hat.set(h, est.target.state, est.target.action, est.hi)?;
        }
    }
    Ok(Phase1Outcome {
        tau_hat,
        estimates,
        episodes_used: episodes.len(),
        batch_log,
        episodes,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::OracleAgent;
    use crate::mdp::tests::one_state;

    #[test]
    fn identifiability_examples() {
        assert_eq!(identifiability_test(100, 98, 0.5), Identifiability::Sufficient);
        assert_eq!(
            identifiability_test(100, 3, 0.5),
            Identifiability::Insufficient { starved: false }
        );
        assert_eq!(
            identifiability_test(0, 0, 0.5),
            Identifiability::Insufficient { starved: true }
        );
    }

    #[test]
    fn batch_arithmetic() {
        let cfg = Phase1Config::default();
        assert_eq!(cfg.batch_len(), 64);
        assert_eq!(cfg.num_batches(1), 3);
        assert_eq!(cfg.num_batches(2), 4);
        let halvings = cfg.num_batches(2);
        assert_eq!(2.0 / 2f64.powi(halvings as i32), 0.125);
    }

    #[test]
    fn exponent_warnings_follow_conditions() {
        let cfg = Phase1Config::default();
        assert!(cfg.exponent_warnings(0.0).is_empty());
        assert_eq!(cfg.exponent_warnings(0.6).len(), 2);
        assert!(cfg.exponent_warnings(0.45).is_empty());
        let wide = Phase1Config { beta: 0.4, ..cfg };
        assert_eq!(wide.exponent_warnings(0.3).len(), 1);
    }

    #[test]
    fn oracle_single_step_estimate() {
        let mdp = Arc::new(one_state(1, vec![0.9, 0.3], vec![0.0, 0.0]));
        let mut env = Environment::new(Arc::clone(&mdp), 1);
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let out = phase1_estimate(&mut env, &mut agent, &Phase1Config::default()).unwrap();
        let tau = out.tau_hat.get(0, 0, 1);
        assert!((0.6..=0.725).contains(&tau), "{tau}");
        // already-optimal action collapses toward zero
        assert!(out.tau_hat.get(0, 0, 0) <= 4096f64.powf(-0.25));
        assert!(!out.partial);
        assert_eq!(out.episodes_used, 2 * 3 * 64);
        for e in &out.estimates {
            assert_eq!(e.hi - e.lo, 1.0 / 8.0);
        }
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let mdp = Arc::new(one_state(1, vec![0.9, 0.3], vec![0.0, 0.0]));
        let mut env = Environment::new(Arc::clone(&mdp), 1);
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let cfg = Phase1Config {
            episodes: 200,
            alpha: 0.9,
            ..Default::default()
        };
        let out = phase1_estimate(&mut env, &mut agent, &cfg).unwrap();
        assert!(out.partial);
        assert!(out.episodes_used <= 200);
        assert!(out.estimates.iter().any(|e| e.status == TargetStatus::Partial));
    }

    #[test]
    fn unreachable_state_starves() {
        let mdp = Arc::new(crate::envs::chain_mdp());
        let mut env = Environment::new(Arc::clone(&mdp), 1);
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let out = phase1_estimate(&mut env, &mut agent, &Phase1Config::default()).unwrap();
        let starved: Vec<_> = out.starved().map(|e| e.target).collect();
        // s1 is never the initial state
        assert!(starved.contains(&Target { step: Some(0), state: 1, action: 0 }));
    }
}
