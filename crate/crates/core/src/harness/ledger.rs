use serde::{Deserialize, Serialize};

use crate::episode::EpisodeOutcome;
use crate::error::Result;
use crate::harness::stats::{default_grid, fit_regret_exponent, ExponentFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Phase1,
    Phase2,
    Baseline,
    Subsidy,
}

/// One row of the ledger; the CSV column order follows the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    pub phase: Phase,
    pub agent_return: f64,
    pub principal_return: f64,
    pub welfare: f64,
    pub terminal_pollution: Option<f64>,
    pub seed: u64,
}

impl EpisodeRecord {
    pub fn from_outcome(episode: usize, phase: Phase, outcome: &EpisodeOutcome, seed: u64) -> Self {
        EpisodeRecord {
            episode,
            phase,
            agent_return: outcome.agent_return,
            principal_return: outcome.principal_return,
            welfare: outcome.welfare,
            terminal_pollution: outcome.terminal_label,
            seed,
        }
    }
}

/// Split of the welfare regret by source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RegretDecomposition {
    /// Welfare lost while estimating transfers.
    pub phase1: f64,
    /// `W* - W(intended policy)`, summed over phase 2.
    pub principal_learning: f64,
    /// `W(intended policy) - realized welfare`, summed over phase 2.
    pub agent_deviation: f64,
}

impl RegretDecomposition {
    pub fn total(&self) -> f64 {
        self.phase1 + self.principal_learning + self.agent_deviation
    }
}

/// Per-episode welfare records with the social-welfare regret they imply.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretLedger {
    pub records: Vec<EpisodeRecord>,
    pub w_star: f64,
    /// `R_sw(T) = T * W* - sum_{k <= T} W_k` for `T = 1..=len`.
    pub cumulative_regret: Vec<f64>,
    pub fit: Option<ExponentFit>,
    pub decomposition: Option<RegretDecomposition>,
}

impl RegretLedger {
    pub fn new(w_star: f64, records: Vec<EpisodeRecord>) -> Self {
        let cumulative_regret = cumulative_regret(w_star, &records);
        let mut ledger = RegretLedger {
            records,
            w_star,
            cumulative_regret,
            fit: None,
            decomposition: None,
        };
        ledger.fit = fit_regret_exponent(&ledger, &default_grid(ledger.len())).ok();
        ledger
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `R_sw(t)`; zero for `t == 0`.
    pub fn regret_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.cumulative_regret[t - 1]
        }
    }

    pub fn total_regret(&self) -> f64 {
        self.regret_at(self.len())
    }

    /// Recomputes the regret series from the raw records.
    pub fn replay(&self) -> Vec<f64> {
        cumulative_regret(self.w_star, &self.records)
    }

    pub fn welfare_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.welfare).collect()
    }

    pub fn pollution_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.terminal_pollution).collect()
    }

    /// Mean welfare over the last `n` records.
    pub fn tail_mean_welfare(&self, n: usize) -> f64 {
        tail_mean(self.records.iter().map(|r| r.welfare), self.len(), n)
    }

    pub fn tail_mean_pollution(&self, n: usize) -> Option<f64> {
        let p = self.pollution_series()?;
        Some(tail_mean(p.into_iter(), self.len(), n))
    }

    pub fn refit(&mut self, grid: &[usize]) -> Result<&ExponentFit> {
        self.fit = Some(fit_regret_exponent(self, grid)?);
        Ok(self.fit.as_ref().expect("just set"))
    }
}

fn tail_mean(values: impl Iterator<Item = f64>, len: usize, n: usize) -> f64 {
    let n = n.min(len).max(1);
    values.skip(len.saturating_sub(n)).sum::<f64>() / n as f64
}

fn cumulative_regret(w_star: f64, records: &[EpisodeRecord]) -> Vec<f64> {
    let mut total = 0.0;
    records
        .iter()
        .map(|r| {
            total += w_star - r.welfare;
            total
        })
        .collect()
}
