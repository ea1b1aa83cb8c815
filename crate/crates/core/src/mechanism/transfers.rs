use crate::error::Result;
use crate::mdp::{value_iteration, FiniteMdp, TransferPolicy, ValueSolution};

/// Slack allowed when deciding that an offered payment makes an action weakly optimal.
pub const IMPLEMENTABILITY_TOL: f64 = 1e-9;

/// Smallest payments that make each action weakly optimal for the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalTransferTable {
    /// `tau*[h][s][a] = max_a' Q_h(s,a') - Q_h(s,a)`, clipped at zero.
    pub tau_star: TransferPolicy,
    /// `[s][a]`: the largest step-indexed payment over all steps.
    pub stationary_reduction: Vec<Vec<f64>>,
}

impl MinimalTransferTable {
    /// The stationary reduction replicated over the horizon.
    pub fn stationary_policy(&self) -> TransferPolicy {
        TransferPolicy::stationary(self.tau_star.horizon(), &self.stationary_reduction)
            .expect("reduction has the table's shape")
    }
}

fn agent_values(mdp: &FiniteMdp) -> ValueSolution {
    value_iteration(mdp, &mdp.agent_rewards(), None).expect("agent rewards fit the MDP")
}

pub fn minimal_transfers(mdp: &FiniteMdp) -> MinimalTransferTable {
    let sol = agent_values(mdp);
    let (hz, n, k) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut tau_star = TransferPolicy::zeros(hz, n, k);
    let mut stationary_reduction = vec![vec![0.0; k]; n];
    for h in 0..hz {
        for (s, reduction) in stationary_reduction.iter_mut().enumerate() {
            let row = sol.q_row(h, s);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (a, &q) in row.iter().enumerate() {
                let gap = (best - q).max(0.0);
                tau_star.set(h, s, a, gap).expect("gap is finite and nonnegative");
                reduction[a] = f64::max(reduction[a], gap);
            }
        }
    }
    MinimalTransferTable {
        tau_star,
        stationary_reduction,
    }
}

/// Which `(h, s, a)` a payment table makes weakly optimal for the agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Implementability {
    num_states: usize,
    num_actions: usize,
    flags: Vec<bool>,
}

impl Implementability {
    pub fn get(&self, h: usize, s: usize, a: usize) -> bool {
        self.flags[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn all(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }

    pub fn count_failures(&self) -> usize {
        self.flags.iter().filter(|&&f| !f).count()
    }
}

/// Offering `tau_hat[h][s][a]` on `a` alone makes `a` weakly optimal at `(h, s)`
/// against the agent's untransferred values.
pub fn implementability_check(mdp: &FiniteMdp, tau_hat: &TransferPolicy) -> Result<Implementability> {
    tau_hat.check_dims(mdp)?;
    let sol = agent_values(mdp);
    let (hz, n, k) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut flags = Vec::with_capacity(hz * n * k);
    for h in 0..hz {
        for s in 0..n {
            let row = sol.q_row(h, s);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            flags.extend(
                row.iter()
                    .enumerate()
                    .map(|(a, q)| q + tau_hat.get(h, s, a) >= best - IMPLEMENTABILITY_TOL),
            );
        }
    }
    Ok(Implementability {
        num_states: n,
        num_actions: k,
        flags,
    })
}
