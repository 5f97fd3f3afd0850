//! Effective run settings: defaults, then a key=value file, then flags.

use std::path::Path;

use agentprint_core::artifact::read_text;
use agentprint_core::learn::{ForestConfig, GbmConfig, LearnerConfig};
use agentprint_core::reduce::ReductionConfig;
use agentprint_core::{Error, Result};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Gbm,
    Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub strict: bool,
    pub learner: Learner,
    pub folds: usize,
    pub top_k: usize,
    pub reduction: ReductionConfig,
    pub gbm: GbmConfig,
    pub forest: ForestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            jobs: None,
            strict: false,
            learner: Learner::Gbm,
            folds: 5,
            top_k: 3,
            reduction: ReductionConfig::default(),
            gbm: GbmConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("config key `{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "seed" => self.seed = parse(&key, value)?,
            "jobs" => self.jobs = Some(parse(&key, value)?),
            "strict" => self.strict = parse(&key, value)?,
            "learner" => {
                self.learner = Learner::from_str(value, true)
                    .map_err(|_| Error::InvalidInput(format!("unknown learner `{value}`")))?
            }
            "folds" => self.folds = parse(&key, value)?,
            "top_k" => self.top_k = parse(&key, value)?,
            "corr_threshold" => self.reduction.correlation_threshold = parse(&key, value)?,
            "r2_threshold" => self.reduction.r2_threshold = parse(&key, value)?,
            "min_epv" => self.reduction.epv_minimum = parse(&key, value)?,
            "n_rounds" => self.gbm.n_rounds = parse(&key, value)?,
            "max_depth" => self.gbm.max_depth = parse(&key, value)?,
            "learning_rate" => self.gbm.learning_rate = parse(&key, value)?,
            "min_child_weight" => self.gbm.min_child_weight = parse(&key, value)?,
            "l2_reg" => self.gbm.l2_reg = parse(&key, value)?,
            "n_trees" => self.forest.n_trees = parse(&key, value)?,
            "forest_max_depth" => self.forest.max_depth = parse(&key, value)?,
            "bootstrap" => self.forest.bootstrap = parse(&key, value)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&read_text(path)?)
    }

    /// The learner seeds follow the run seed.
    pub fn learner_config(&self) -> LearnerConfig {
        match self.learner {
            Learner::Gbm => LearnerConfig::Gbm(self.gbm_config()),
            Learner::Forest => LearnerConfig::Forest(ForestConfig {
                seed: self.seed,
                ..self.forest
            }),
        }
    }

    pub fn gbm_config(&self) -> GbmConfig {
        GbmConfig {
            seed: self.seed,
            ..self.gbm
        }
    }
}
