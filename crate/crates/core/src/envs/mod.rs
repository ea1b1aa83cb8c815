//! Concrete environments and the episode sampler that drives them.

mod chain;
mod lineworld;
mod random;
mod sampler;

pub use chain::chain_mdp;
pub use lineworld::{
    build_lineworld, build_subsidy_policy, ActionEffect, LineWorldConfig, DETOUR, FAST, SLOW,
};
pub use random::random_mdp;
pub use sampler::{Environment, RewardNoise, TerminalLabel, Transition};
