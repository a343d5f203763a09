use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use super::HarnessError;
use crate::body::AttackKind;
use crate::env::{toy_biped_body, toy_quadruped_body, RewardForm};
use crate::{DeConfig, GaitConstants, RobotBody};
use crate::{ToyWalker, ToyWalkerSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobotChoice {
    ToyBiped,
    ToyQuadruped,
    /// Path to a morphology JSON file (see [`RobotBody`]).
    Custom(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeSettings {
    /// `None` picks the robot default: 14 for the biped, 26 for the
    /// quadruped. Custom robots must set it.
    #[serde(alias = "np")]
    pub population: Option<usize>,
    #[serde(alias = "f")]
    pub mutation_scale: f64,
    #[serde(alias = "cr")]
    pub crossover_rate: f64,
    pub generations: usize,
}

impl Default for DeSettings {
    fn default() -> Self {
        Self {
            population: None,
            mutation_scale: 0.5,
            crossover_rate: 0.7,
            generations: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Episodes per fitness estimate (`M`).
    #[serde(alias = "m")]
    pub episodes: usize,
    /// Episode horizon (`T`).
    #[serde(alias = "t")]
    pub horizon: usize,
    /// Fitness estimates averaged for the reported grand mean.
    pub runs: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 50,
            horizon: 1000,
            runs: 1000,
        }
    }
}

fn one_or_many<'de, D>(de: D) -> Result<Vec<AttackKind>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(AttackKind),
        Many(Vec<AttackKind>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(v) => v,
    })
}

fn default_kinds() -> Vec<AttackKind> {
    vec![AttackKind::Length, AttackKind::Thickness]
}

fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.1]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment description. Every field has a default, so `{}` is a valid
/// config: the toy biped, both families, `ε ∈ {0, 0.01, 0.05, 0.1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_robot")]
    pub robot: RobotChoice,
    /// Attack kinds searched at every epsilon, one cell each. Accepts a single
    /// kind under `kind` too.
    #[serde(
        default = "default_kinds",
        alias = "kind",
        deserialize_with = "one_or_many"
    )]
    pub kinds: Vec<AttackKind>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub de: DeSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Overrides the toy gait constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait: Option<GaitConstants>,
    /// Overrides the reward form. Required for custom robots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardForm>,
    /// Epsilon whose perturbations go to `perturbations.csv`. Defaults to
    /// 0.05 when swept, else the largest nonzero epsilon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_epsilon: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub parallel: bool,
}

fn default_robot() -> RobotChoice {
    RobotChoice::ToyBiped
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative custom-robot paths are resolved against
    /// the config file's directory.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if let RobotChoice::Custom(p) = &mut cfg.robot {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.epsilons.is_empty() {
            return bad("epsilons must not be empty".into());
        }
        for &e in &self.epsilons {
            if !(e.is_finite() && (0.0..1.0).contains(&e)) {
                return bad(format!("epsilon {e} outside [0, 1)"));
            }
        }
        if self.kinds.is_empty() {
            return bad("at least one attack kind is required".into());
        }
        if self.eval.episodes == 0 || self.eval.horizon == 0 || self.eval.runs == 0 {
            return bad("eval episodes, horizon and runs must be at least 1".into());
        }
        if matches!(self.robot, RobotChoice::Custom(_)) {
            if self.de.population.is_none() {
                return bad("custom robots need an explicit de.population".into());
            }
            if self.reward.is_none() {
                return bad("custom robots need an explicit reward form".into());
            }
        }
        if let Some(r) = self.report_epsilon {
            if !self.epsilons.contains(&r) {
                return bad(format!("report_epsilon {r} is not in the sweep"));
            }
        }
        // DE parameters are checked with a placeholder dimension.
        self.de_config(1, 0.0, 0)?
            .validate()
            .map_err(HarnessError::Config)?;
        Ok(())
    }

    pub fn population(&self) -> Result<usize, HarnessError> {
        match (self.de.population, &self.robot) {
            (Some(np), _) => Ok(np),
            (None, RobotChoice::ToyBiped) => Ok(14),
            (None, RobotChoice::ToyQuadruped) => Ok(26),
            (None, RobotChoice::Custom(_)) => Err(HarnessError::Config(
                "custom robots need an explicit de.population".into(),
            )),
        }
    }

    pub fn de_config(&self, dim: usize, epsilon: f64, seed: u64) -> Result<DeConfig, HarnessError> {
        Ok(DeConfig {
            population: self.population()?,
            mutation_scale: self.de.mutation_scale,
            crossover_rate: self.de.crossover_rate,
            generations: self.de.generations,
            epsilon,
            dim,
            master_seed: seed,
        })
    }

    pub fn robot_body(&self) -> Result<RobotBody, HarnessError> {
        match &self.robot {
            RobotChoice::ToyBiped => Ok(toy_biped_body()),
            RobotChoice::ToyQuadruped => Ok(toy_quadruped_body()),
            RobotChoice::Custom(path) => load_body(path),
        }
    }

    /// Environment for this experiment, with config overrides applied.
    pub fn walker(&self) -> Result<ToyWalker, HarnessError> {
        let mut spec = match self.robot {
            RobotChoice::ToyBiped => ToyWalkerSpec::biped(),
            RobotChoice::ToyQuadruped => ToyWalkerSpec::quadruped(),
            RobotChoice::Custom(_) => ToyWalkerSpec {
                body: self.robot_body()?,
                gait: GaitConstants::default(),
                reward: RewardForm::Humanoid,
            },
        };
        if let Some(g) = &self.gait {
            spec.gait = g.clone();
        }
        if let Some(r) = self.reward {
            spec.reward = r;
        }
        Ok(ToyWalker::new(spec)?)
    }
}

pub fn load_body(path: &Path) -> Result<RobotBody, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}
