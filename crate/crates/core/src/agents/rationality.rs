use std::sync::Arc;

use crate::agents::AgentLearner;
use crate::envs::Environment;
use crate::episode::play_announced;
use crate::error::{Error, Result};
use crate::mdp::{expected_return, value_iteration, FiniteMdp, StochasticPolicy, TransferPolicy};

/// Observed hindsight rationality of an agent over one transfer sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalityProfile {
    /// Fitted regret exponent, clamped to [0, 1].
    pub kappa: f64,
    /// Smallest constant with `cumulative[k-1] <= c * k^kappa` on the run.
    pub c: f64,
    pub zeta: f64,
    /// `1 - T^-zeta`.
    pub confidence: f64,
    /// Per-episode gap between the best response and the agent's policy.
    pub shortfall: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Set when the shortfall was identically zero and no slope was fitted.
    pub degenerate: bool,
}

/// Least-squares slope and intercept of `ln y` on `ln x`, skipping points with `y <= 0`.
pub fn fit_loglog_slope(points: impl IntoIterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Runs `episodes` episodes and measures the agent's per-episode shortfall
/// against the best response to that episode's transfers.
///
/// The agent's policy is snapshotted after the transfers are announced and
/// before it acts; both values are exact expectations under `mdp`.
pub fn measure_rationality<A, F>(
    agent: &mut A,
    mdp: Arc<FiniteMdp>,
    mut transfer_sequence: F,
    episodes: usize,
    seed: u64,
) -> Result<RationalityProfile>
where
    A: AgentLearner,
    F: FnMut(usize) -> TransferPolicy,
{
    if episodes < 2 {
        return Err(Error::input("rationality measurement needs at least 2 episodes"));
    }
    let rewards = mdp.agent_rewards();
    let mut env = Environment::new(Arc::clone(&mdp), seed);
    let mut shortfall = Vec::with_capacity(episodes);
    let mut cumulative = Vec::with_capacity(episodes);
    let mut total = 0.0;
    let mut cached: Option<(TransferPolicy, f64)> = None;
    for k in 0..episodes {
        let tau = transfer_sequence(k);
        tau.check_dims(&mdp)?;
        let best = match &cached {
            Some((t, v)) if *t == tau => *v,
            _ => {
                let v = value_iteration(&mdp, &rewards, Some(&tau))?
                    .initial_value(mdp.initial_distribution());
                cached = Some((tau.clone(), v));
                v
            }
        };
        agent.begin_episode(&tau);
        let snapshot = StochasticPolicy::from_fn(mdp.horizon(), mdp.num_states(), mdp.num_actions(), |h, s| {
            agent.action_distribution(h, s, tau.offered(h, s))
        });
        let own = expected_return(&mdp, &rewards, Some(&tau), &snapshot);
        let gap = best - own;
        shortfall.push(gap);
        total += gap.max(0.0);
        cumulative.push(total);
        play_announced(&mut env, agent, &tau);
    }

    let zeta = 1.0;
    let confidence = 1.0 - (episodes as f64).powf(-zeta);
    let half = episodes / 2;
    let fit = fit_loglog_slope(
        (half.max(1)..=episodes).map(|k| (k as f64, cumulative[k - 1])),
    );
    let (kappa, degenerate) = match fit {
        Some((slope, _)) if total > 0.0 => (slope.clamp(0.0, 1.0), false),
        _ => (0.0, true),
    };
    let c = cumulative
        .iter()
        .enumerate()
        .map(|(i, &v)| v / ((i + 1) as f64).powf(kappa))
        .fold(0.0, f64::max);
    Ok(RationalityProfile {
        kappa,
        c,
        zeta,
        confidence,
        shortfall,
        cumulative,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{FixedPolicyAgent, OracleAgent};
    use crate::envs::chain_mdp;

    #[test]
    fn oracle_has_zero_shortfall() {
        let mdp = Arc::new(chain_mdp());
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let seq = |k: usize| {
            let mut t = TransferPolicy::zeros_for(&chain_mdp());
            t.set(k % 2, 0, k % 2, 0.05 * (k % 7) as f64).unwrap();
            t
        };
        let prof = measure_rationality(&mut agent, mdp, seq, 200, 1).unwrap();
        assert!(prof.shortfall.iter().all(|&g| g.abs() < 1e-9));
        assert_eq!(prof.kappa, 0.0);
        assert!(prof.degenerate);
        assert_eq!(prof.c, 0.0);
    }

    #[test]
    fn fixed_suboptimal_agent_has_linear_regret() {
        let mdp = Arc::new(chain_mdp());
        // action 0 in s0 forfeits 0.8 per episode
        let mut agent = FixedPolicyAgent::constant(2, 2, 0);
        let zero = TransferPolicy::zeros_for(&mdp);
        let prof = measure_rationality(&mut agent, Arc::clone(&mdp), |_| zero.clone(), 1000, 2).unwrap();
        let delta = prof.shortfall[0];
        assert!((delta - 0.8).abs() < 1e-12);
        assert!((prof.cumulative[999] - 800.0).abs() < 1e-9);
        assert!((prof.kappa - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cumulative_is_monotone_and_nonnegative() {
        use crate::agents::{QLearningAgent, QLearningConfig};
        let mdp = Arc::new(chain_mdp());
        let mut agent = QLearningAgent::new(QLearningConfig::default(), 2, 2, 2, 3).unwrap();
        let zero = TransferPolicy::zeros_for(&mdp);
        let prof = measure_rationality(&mut agent, mdp, |_| zero.clone(), 500, 3).unwrap();
        assert!(prof.shortfall.iter().all(|&g| g >= -1e-9));
        assert!(prof.cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn too_few_episodes_rejected() {
        let mdp = Arc::new(chain_mdp());
        let mut agent = OracleAgent::new(Arc::clone(&mdp));
        let zero = TransferPolicy::zeros_for(&mdp);
        assert!(measure_rationality(&mut agent, mdp, |_| zero.clone(), 1, 0).is_err());
    }

    #[test]
    fn loglog_slope_of_power_laws() {
        let (s, _) = fit_loglog_slope((1..100).map(|t| (t as f64, 3.0 * (t as f64).powf(0.7)))).unwrap();
        assert!((s - 0.7).abs() < 1e-9);
        assert!(fit_loglog_slope([(1.0, 0.0), (2.0, 0.0)]).is_none());
    }
}
