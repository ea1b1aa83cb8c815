use crate::mdp::FiniteMdp;

/// The two-state deterministic chain used throughout the tests and sweeps.
///
/// In `s0`, action 0 pays the agent 0.1 and stays; action 1 pays nothing and
/// moves to `s1`. In `s1`, action 0 pays 1.0 and action 1 pays 0.2; both stay.
/// Horizon 2, start in `s0`, principal reward identically zero.
pub fn chain_mdp() -> FiniteMdp {
    FiniteMdp::new(
        2,
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ],
        vec![vec![0.1, 0.0], vec![1.0, 0.2]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![1.0, 0.0],
    )
    .expect("chain MDP is well formed")
}
