use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::QLearningConfig;
use crate::envs::{LineWorldConfig, RewardNoise};
use crate::error::{Error, Result};
use crate::mechanism::{Phase1Config, Phase2Config};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Lineworld(LineWorldConfig),
    Random {
        states: usize,
        actions: usize,
        horizon: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        sparsity: f64,
    },
    Chain,
    /// An MDP document on disk, resolved relative to the config file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    Qlearning(QLearningConfig),
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    Subsidy,
    TwoPhase,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Subsidy => "subsidy",
            Scenario::TwoPhase => "two_phase",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ScenarioField {
    One(Scenario),
    Many(Vec<Scenario>),
}

fn scenarios_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Scenario>, D::Error> {
    Ok(match ScenarioField::deserialize(d)? {
        ScenarioField::One(s) => vec![s],
        ScenarioField::Many(v) => v,
    })
}

fn default_scenarios() -> Vec<Scenario> {
    vec![Scenario::Baseline]
}

fn default_episodes() -> usize {
    1000
}

fn default_replicates() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_window() -> usize {
    200
}

/// Internally tagged enums buffer their content and lose the field path, so
/// the tagged sections are deserialized once on their own for diagnostics.
fn check_tagged<T: serde::de::DeserializeOwned>(
    doc: &serde_json::Map<String, serde_json::Value>,
    section: &str,
    kind: &str,
) -> Result<()> {
    let Some(serde_json::Value::Object(body)) = doc.get(section) else {
        return Ok(());
    };
    if body.get("kind").and_then(|k| k.as_str()) != Some(kind) {
        return Ok(());
    }
    let mut body = body.clone();
    body.remove("kind");
    serde_path_to_error::deserialize::<_, T>(serde_json::Value::Object(body))
        .map(drop)
        .map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("at `{section}.{path}`: {}", e.into_inner()))
        })
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    /// One scenario name or a list of them.
    #[serde(default = "default_scenarios", deserialize_with = "scenarios_de")]
    pub scenario: Vec<Scenario>,
    #[serde(default)]
    pub phase1: Phase1Config,
    #[serde(default)]
    pub phase2: Phase2Config,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub noise: RewardNoise,
    #[serde(default = "default_window")]
    pub rolling_window: usize,
    /// Totals `T` for `regret-sweep`.
    #[serde(default)]
    pub t_grid: Vec<usize>,
    /// Directory that relative paths inside the config resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; error messages name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        if let Ok(serde_json::Value::Object(doc)) = serde_json::from_str(text) {
            check_tagged::<LineWorldConfig>(&doc, "env", "lineworld")?;
            check_tagged::<QLearningConfig>(&doc, "agent", "qlearning")?;
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A missing or unreadable file is a config error.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_empty() {
            return Err(Error::config("at `scenario`: at least one scenario is required"));
        }
        if self.episodes == 0 {
            return Err(Error::config("at `episodes`: must be positive"));
        }
        if self.replicates == 0 {
            return Err(Error::config("at `replicates`: must be positive"));
        }
        if self.rolling_window == 0 {
            return Err(Error::config("at `rolling_window`: must be positive"));
        }
        if !self.seeds.is_empty() && self.seeds.len() != 1 && self.seeds.len() != self.replicates {
            return Err(Error::config(format!(
                "at `seeds`: expected 1 or {} seeds, got {}",
                self.replicates,
                self.seeds.len()
            )));
        }
        if self.t_grid.contains(&0) {
            return Err(Error::config("at `t_grid`: totals must be positive"));
        }
        match &self.env {
            EnvConfig::Lineworld(lw) => lw.validate()?,
            EnvConfig::Random {
                states,
                actions,
                horizon,
                sparsity,
                ..
            } => {
                if *states == 0 || *actions == 0 || *horizon == 0 {
                    return Err(Error::config("at `env`: states, actions and horizon must be positive"));
                }
                if !(0.0..=1.0).contains(sparsity) {
                    return Err(Error::config("at `env.sparsity`: must lie in [0,1]"));
                }
            }
            EnvConfig::Chain | EnvConfig::File { .. } => {}
        }
        if let AgentConfig::Qlearning(q) = &self.agent {
            q.validate()?;
        }
        if self.scenario.contains(&Scenario::Subsidy) && !matches!(self.env, EnvConfig::Lineworld(_)) {
            return Err(Error::config("at `scenario`: subsidy needs a lineworld environment"));
        }
        self.phase2.validate()
    }

    /// One seed per replicate. No seeds means `0..replicates`; a single seed
    /// `s` means `s..s + replicates`.
    pub fn resolved_seeds(&self) -> Vec<u64> {
        match self.seeds.as_slice() {
            [] => (0..self.replicates as u64).collect(),
            [s] => (0..self.replicates as u64).map(|i| s + i).collect(),
            many => many.to_vec(),
        }
    }

    pub(crate) fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let cfg = ExperimentConfig::from_json(
            r#"{"env":{"kind":"lineworld"},"agent":{"kind":"qlearning"},"scenario":"baseline","episodes":50}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, vec![Scenario::Baseline]);
        assert_eq!(cfg.env, EnvConfig::Lineworld(LineWorldConfig::default()));
        assert_eq!(cfg.rolling_window, 200);
        assert_eq!(cfg.resolved_seeds(), vec![0]);
    }

    #[test]
    fn nested_fields_and_lists() {
        let cfg = ExperimentConfig::from_json(
            r#"{"env":{"kind":"lineworld","subsidy":0.5},
                "agent":{"kind":"qlearning","learning_rate":0.2,"exploration":{"initial":1.0,"power":0.5}},
                "scenario":["baseline","subsidy"],"replicates":3,"seeds":[7]}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario.len(), 2);
        assert_eq!(cfg.resolved_seeds(), vec![7, 8, 9]);
        let EnvConfig::Lineworld(lw) = &cfg.env else { panic!() };
        assert_eq!(lw.subsidy, 0.5);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_json(
            r#"{"env":{"kind":"lineworld","horizon":"x"},"agent":{"kind":"oracle"}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("env.horizon"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"env":{"kind":"chain"},"agent":{"kind":"oracle"},"episodes":-1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("episodes"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"env":{"kind":"chain"},"agent":{"kind":"oracle"},"bogus":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn subsidy_outside_lineworld_rejected() {
        assert!(ExperimentConfig::from_json(
            r#"{"env":{"kind":"chain"},"agent":{"kind":"oracle"},"scenario":"subsidy"}"#
        )
        .is_err());
    }
}
