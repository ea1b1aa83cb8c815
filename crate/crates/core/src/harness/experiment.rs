use std::sync::Arc;

use serde::Serialize;

use crate::agents::{AgentLearner, OracleAgent, QLearningAgent};
use crate::envs::{build_lineworld, build_subsidy_policy, chain_mdp, random_mdp, Environment, LineWorldConfig};
use crate::episode::run_episode;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::config::{AgentConfig, EnvConfig, ExperimentConfig, Scenario};
use crate::harness::ledger::{EpisodeRecord, Phase, RegretLedger};
use crate::harness::stats::{fit_power_law, ExponentFit};
use crate::mdp::{optimal_welfare, FiniteMdp, TransferPolicy};
use crate::mechanism::{phase1_budget, two_phase_run};

/// Builds the MDP named by the config and a sampler over it seeded with `seed`.
pub fn build_environment(cfg: &ExperimentConfig, seed: u64) -> Result<Environment> {
    let env = match &cfg.env {
        EnvConfig::Lineworld(lw) => {
            let lw = lw.clone();
            let mdp = Arc::new(build_lineworld(&lw)?);
            Environment::new(mdp, seed).with_terminal_label(Arc::new(move |s| lw.pollution_of(s) as f64))
        }
        EnvConfig::Random {
            states,
            actions,
            horizon,
            seed: mdp_seed,
            sparsity,
        } => Environment::new(
            Arc::new(random_mdp(*states, *actions, *horizon, *mdp_seed, *sparsity)),
            seed,
        ),
        EnvConfig::Chain => Environment::new(Arc::new(chain_mdp()), seed),
        EnvConfig::File { path } => {
            let path = cfg.resolve(path);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Environment::new(Arc::new(FiniteMdp::from_json(&text)?), seed)
        }
    };
    Ok(env.with_noise(cfg.noise))
}

pub fn build_agent(cfg: &ExperimentConfig, mdp: &Arc<FiniteMdp>, seed: u64) -> Result<Box<dyn AgentLearner>> {
    Ok(match &cfg.agent {
        AgentConfig::Qlearning(q) => Box::new(QLearningAgent::new(
            q.clone(),
            mdp.num_states(),
            mdp.num_actions(),
            mdp.horizon(),
            seed,
        )?),
        AgentConfig::Oracle => Box::new(OracleAgent::new(Arc::clone(mdp))),
    })
}

/// One scenario played with one seed.
#[derive(Clone, Debug)]
pub struct ReplicateResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub ledger: RegretLedger,
    /// Transfer estimates, for the two-phase scenario.
    pub tau_hat: Option<TransferPolicy>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Ordered by scenario as listed in the config, then by seed order.
    pub runs: Vec<ReplicateResult>,
}

impl ExperimentResult {
    pub fn ledgers(&self, scenario: Scenario) -> impl Iterator<Item = &RegretLedger> {
        self.runs.iter().filter(move |r| r.scenario == scenario).map(|r| &r.ledger)
    }

    /// Mean over replicates of the last-`n` welfare average.
    pub fn tail_welfare(&self, scenario: Scenario, n: usize) -> Option<f64> {
        mean(self.ledgers(scenario).map(|l| l.tail_mean_welfare(n)))
    }

    pub fn tail_pollution(&self, scenario: Scenario, n: usize) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.ledgers(scenario).map(|l| l.tail_mean_pollution(n)).collect();
        mean(vals?.into_iter())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

fn phase_of(scenario: Scenario) -> Phase {
    match scenario {
        Scenario::Subsidy => Phase::Subsidy,
        _ => Phase::Baseline,
    }
}

fn run_fixed_transfers(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    seed: u64,
    transfers: &TransferPolicy,
    mut env: Environment,
) -> Result<ReplicateResult> {
    let mdp = env.shared_mdp();
    let mut agent = build_agent(cfg, &mdp, seed)?;
    let phase = phase_of(scenario);
    let records = (1..=cfg.episodes)
        .map(|k| {
            let out = run_episode(&mut env, &mut agent, transfers);
            EpisodeRecord::from_outcome(k, phase, &out, seed)
        })
        .collect();
    Ok(ReplicateResult {
        scenario,
        seed,
        ledger: RegretLedger::new(optimal_welfare(&mdp).w_star, records),
        tau_hat: None,
    })
}

fn run_replicate(cfg: &ExperimentConfig, scenario: Scenario, seed: u64) -> Result<ReplicateResult> {
    let mut env = build_environment(cfg, seed)?;
    match scenario {
        Scenario::Baseline => {
            let zero = TransferPolicy::zeros_for(env.mdp());
            run_fixed_transfers(cfg, scenario, seed, &zero, env)
        }
        Scenario::Subsidy => {
            let EnvConfig::Lineworld(lw) = &cfg.env else {
                return Err(Error::config("subsidy needs a lineworld environment"));
            };
            let policy = build_subsidy_policy(&LineWorldConfig::clone(lw).with_subsidy())?;
            run_fixed_transfers(cfg, scenario, seed, &policy, env)
        }
        Scenario::TwoPhase => {
            let mdp = env.shared_mdp();
            let mut agent = build_agent(cfg, &mdp, seed)?;
            let report = two_phase_run(&mut env, &mut agent, &cfg.phase1, &cfg.phase2, cfg.episodes)?;
            Ok(ReplicateResult {
                scenario,
                seed,
                ledger: report.ledger,
                tau_hat: Some(report.phase1.tau_hat),
            })
        }
    }
}

/// Runs every configured scenario for every replicate seed.
///
/// Replicates are independent and run under `exec`; results do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.scenario.contains(&Scenario::TwoPhase) {
        let env = build_environment(cfg, 0)?;
        let m = env.mdp();
        phase1_budget(&cfg.phase1, cfg.episodes, m.horizon(), m.num_states(), m.num_actions())?;
    }
    let seeds = cfg.resolved_seeds();
    let jobs: Vec<(Scenario, u64)> = cfg
        .scenario
        .iter()
        .flat_map(|&sc| seeds.iter().map(move |&s| (sc, s)))
        .collect();
    let runs = exec
        .map_slice(&jobs, |&(sc, seed)| run_replicate(cfg, sc, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { runs })
}

/// Regret of independent two-phase runs at each total on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub t_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `regret[i][j]`: `R_sw(T_i)` for seed `j`.
    pub regret: Vec<Vec<f64>>,
    pub mean_regret: Vec<f64>,
    /// Slope of `ln mean R_sw(T)` against `ln T`.
    pub fit: ExponentFit,
}

/// Runs the two-phase mechanism once per `(T, seed)` and fits the regret exponent.
pub fn regret_sweep(cfg: &ExperimentConfig, t_grid: &[usize], exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    if t_grid.len() < 2 {
        return Err(Error::config("at `t_grid`: need at least 2 totals"));
    }
    {
        let env = build_environment(cfg, 0)?;
        let m = env.mdp();
        for &t in t_grid {
            phase1_budget(&cfg.phase1, t, m.horizon(), m.num_states(), m.num_actions())?;
        }
    }
    let seeds = cfg.resolved_seeds();
    let jobs: Vec<(usize, u64)> = t_grid
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let totals = exec
        .map_slice(&jobs, |&(t, seed)| -> Result<f64> {
            let mut env = build_environment(cfg, seed)?;
            let mdp = env.shared_mdp();
            let mut agent = build_agent(cfg, &mdp, seed)?;
            let rep = two_phase_run(&mut env, &mut agent, &cfg.phase1, &cfg.phase2, t)?;
            Ok(rep.ledger.total_regret())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let regret: Vec<Vec<f64>> = totals.chunks(seeds.len()).map(<[f64]>::to_vec).collect();
    let mean_regret: Vec<f64> = regret
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let points: Vec<(usize, f64)> = t_grid.iter().copied().zip(mean_regret.iter().copied()).collect();
    let fit = fit_power_law(&points)?;
    Ok(SweepResult {
        t_grid: t_grid.to_vec(),
        seeds,
        regret,
        mean_regret,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn baseline_ledger_is_complete() {
        let c = cfg(r#"{"env":{"kind":"lineworld"},"agent":{"kind":"qlearning"},"scenario":"baseline","episodes":300}"#);
        let res = run_experiment(&c, Execution::Sequential).unwrap();
        assert_eq!(res.runs.len(), 1);
        let l = &res.runs[0].ledger;
        assert_eq!(l.len(), 300);
        assert!(l.records.iter().all(|r| r.phase == Phase::Baseline));
        assert!(l
            .records
            .iter()
            .all(|r| (r.agent_return + r.principal_return - r.welfare).abs() < 1e-9));
        assert!(l.records.iter().all(|r| r.terminal_pollution.is_some()));
    }

    #[test]
    fn replicates_are_reproducible_and_strategy_independent() {
        let c = cfg(r#"{"env":{"kind":"chain"},"agent":{"kind":"qlearning"},"scenario":"baseline",
                        "episodes":200,"replicates":4,"seeds":[1,2,3,4]}"#);
        let a = run_experiment(&c, Execution::Parallel).unwrap();
        let b = run_experiment(&c, Execution::Sequential).unwrap();
        assert_eq!(a.runs.len(), 4);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.ledger, y.ledger);
        }
        assert_ne!(a.runs[0].ledger.records, a.runs[1].ledger.records);
    }

    #[test]
    fn two_phase_budget_is_checked_up_front() {
        let c = cfg(r#"{"env":{"kind":"chain"},"agent":{"kind":"oracle"},"scenario":"two_phase","episodes":100}"#);
        let err = run_experiment(&c, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }
}
