//! The principal's side: minimal transfers, transfer estimation by batched
//! binary search, optimistic planning on transfer-shifted rewards, and the
//! two-phase mechanism that chains them.

mod phase1;
mod phase2;
mod transfers;
mod two_phase;

pub use phase1::{
    identifiability_test, phase1_estimate, BatchLog, Identifiability, Phase1Config, Phase1Outcome,
    Target, TargetMode, TargetStatus, TargetEstimate,
};
pub use phase2::{phase2_ucbvi, Phase2Config, Phase2Outcome};
pub use transfers::{implementability_check, minimal_transfers, Implementability, MinimalTransferTable};
pub use two_phase::{phase1_budget, two_phase_run, TwoPhaseReport};
