use crate::agents::AgentLearner;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::harness::{EpisodeRecord, Phase, RegretDecomposition, RegretLedger};
use crate::mdp::optimal_welfare;
use crate::mechanism::phase1::{enumerate_targets, phase1_estimate, Phase1Config, Phase1Outcome};
use crate::mechanism::phase2::{phase2_ucbvi, Phase2Config, Phase2Outcome};

/// Everything a two-phase run produced.
#[derive(Clone, Debug)]
pub struct TwoPhaseReport {
    pub ledger: RegretLedger,
    pub phase1: Phase1Outcome,
    pub phase2: Phase2Outcome,
}

fn required_episodes(cfg: &Phase1Config, total: usize, horizon: usize, targets: usize) -> usize {
    let cfg = Phase1Config {
        episodes: total,
        ..cfg.clone()
    };
    cfg.num_batches(horizon) * cfg.batch_len() * targets
}

/// Worst-case phase 1 episode count for a total budget `total`.
///
/// Errors with [`Error::Budget`] when it exceeds `total / 2`; the error
/// carries the smallest feasible total.
pub fn phase1_budget(
    cfg: &Phase1Config,
    total: usize,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
) -> Result<usize> {
    let targets = enumerate_targets(cfg.targets, horizon, num_states, num_actions).len();
    let feasible = |t: usize| required_episodes(cfg, t, horizon, targets) <= t / 2;
    let required = required_episodes(cfg, total, horizon, targets);
    if feasible(total) {
        return Ok(required);
    }
    // double until feasible, then bisect back down
    let mut hi = total.max(2);
    while !feasible(hi) {
        hi = hi.checked_mul(2).ok_or_else(|| {
            Error::config("phase 1 budget is infeasible for every representable T")
        })?;
    }
    let mut lo = total;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Budget {
        required,
        available: total / 2,
        min_total: hi,
    })
}

/// Estimates transfers, then optimizes welfare on the remaining episodes.
///
/// `cfg1.episodes` is ignored: the batch length and target accuracy are
/// derived from the total budget `total`.
pub fn two_phase_run(
    env: &mut Environment,
    agent: &mut dyn AgentLearner,
    cfg1: &Phase1Config,
    cfg2: &Phase2Config,
    total: usize,
) -> Result<TwoPhaseReport> {
    let mdp = env.shared_mdp();
    let cfg1 = Phase1Config {
        episodes: total,
        ..cfg1.clone()
    };
    cfg1.validate()?;
    cfg2.validate()?;
    phase1_budget(&cfg1, total, mdp.horizon(), mdp.num_states(), mdp.num_actions())?;

    let w_star = optimal_welfare(&mdp).w_star;
    let seed = env.seed();
    let phase1 = phase1_estimate(env, agent, &cfg1)?;
    let remaining = total - phase1.episodes_used;
    let phase2 = phase2_ucbvi(env, agent, &phase1.tau_hat, cfg2, remaining)?;

    let mut records = Vec::with_capacity(total);
    let mut decomposition = RegretDecomposition::default();
    for out in &phase1.episodes {
        decomposition.phase1 += w_star - out.welfare;
        records.push(EpisodeRecord::from_outcome(records.len() + 1, Phase::Phase1, out, seed));
    }
    for (out, &w_plan) in phase2.episodes.iter().zip(&phase2.intended_welfare) {
        decomposition.principal_learning += w_star - w_plan;
        decomposition.agent_deviation += w_plan - out.welfare;
        records.push(EpisodeRecord::from_outcome(records.len() + 1, Phase::Phase2, out, seed));
    }
    let mut ledger = RegretLedger::new(w_star, records);
    ledger.decomposition = Some(decomposition);
    Ok(TwoPhaseReport {
        ledger,
        phase1,
        phase2,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::{FixedPolicyAgent, OracleAgent};
    use crate::envs::chain_mdp;
    use crate::error::ErrorCategory;

    #[test]
    fn small_budget_reports_minimum() {
        let cfg = Phase1Config::default();
        let err = phase1_budget(&cfg, 64, 2, 2, 2).unwrap_err();
        assert_eq!(err.category(), ErrorCategory::Budget);
        let Error::Budget { min_total, .. } = err else { unreachable!() };
        assert!(phase1_budget(&cfg, min_total, 2, 2, 2).is_ok());
        assert!(phase1_budget(&cfg, min_total - 1, 2, 2, 2).is_err());
    }

    #[test]
    fn oracle_with_known_model_only_loses_in_phase1() {
        let mdp = Arc::new(chain_mdp());
        let mut env = Environment::new(Arc::clone(&mdp), 11);
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let cfg2 = Phase2Config {
            known_model: true,
            ..Default::default()
        };
        let t = 1 << 14;
        let rep = two_phase_run(&mut env, &mut agent, &Phase1Config::default(), &cfg2, t).unwrap();
        let d = rep.ledger.decomposition.unwrap();
        assert_eq!(rep.ledger.len(), t);
        assert!(d.principal_learning.abs() < 1e-9);
        assert!(d.agent_deviation.abs() < 1e-9);
        assert!((rep.ledger.total_regret() - d.phase1).abs() < 1e-6);
        assert_eq!(rep.ledger.replay(), rep.ledger.cumulative_regret);
    }

    #[test]
    fn welfare_optimal_agent_has_zero_regret() {
        let mdp = Arc::new(chain_mdp());
        let opt = optimal_welfare(&mdp);
        let mut env = Environment::new(Arc::clone(&mdp), 2);
        let mut agent = FixedPolicyAgent::new(opt.policy.clone());
        let cfg2 = Phase2Config::default();
        let rep = two_phase_run(&mut env, &mut agent, &Phase1Config::default(), &cfg2, 1 << 12).unwrap();
        assert!(rep.ledger.cumulative_regret.iter().all(|r| r.abs() < 1e-9));
    }
}
