//! One JSON document configures every phase; flags override fields by
//! dotted path.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dance_core::cosearch::{RetrainConfig, SearchConfig, ToyTaskConfig};
use dance_core::costmodel::CostModelConstants;
use dance_core::evaluator::EvaluatorTrainConfig;
use dance_core::nn::LrSchedule;
use dance_core::oracle::{DatasetConfig, HwSpace};
use dance_core::workload::ArchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSection {
    #[serde(flatten)]
    pub config: SearchConfig,
    pub task: ToyTaskConfig,
    pub retrain: RetrainConfig,
    /// λ₂ values swept by the pipeline, accuracy-leaning first.
    pub lambda2_grid: Vec<f64>,
    /// λ₂ for the multiplicative baseline; only its sign matters under Adam.
    pub edd_lambda2: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            config: SearchConfig::default(),
            task: ToyTaskConfig::default(),
            retrain: RetrainConfig::default(),
            lambda2_grid: vec![1e-4, 1e-3, 3e-3],
            edd_lambda2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub arch_space: ArchSpace,
    pub cost_model: CostModelConstants,
    pub hw_space: HwSpace,
    pub dataset: DatasetConfig,
    pub evaluator: EvaluatorTrainConfig,
    pub search: SearchSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 200 networks, 20 evaluator epochs, 10 search epochs.
    Smoke,
    /// Full desk-scale run.
    Default,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => serde_json::to_value(Config::default())?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Config = serde_json::from_value(value).context("config does not match the expected schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch_space.validate()?;
        self.hw_space.validate()?;
        self.cost_model.validate()?;
        self.dataset.cost_fn.validate()?;
        self.search.config.validate()?;
        self.search.task.validate()?;
        if self.search.lambda2_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            bail!("lambda2 grid values must be finite and >= 0");
        }
        Ok(())
    }

    /// Routes `seed` into every random source.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = seed;
        self.evaluator = self.evaluator.with_seed(seed);
        self.search.config.seed = seed;
        self.search.task.seed = seed;
        self.search.retrain.seed = seed;
        self
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        if preset == Preset::Smoke {
            self.dataset.networks = 200;
            set_epochs(&mut self.evaluator.hwgen.epochs, &mut self.evaluator.hwgen.schedule, 20);
            set_epochs(&mut self.evaluator.costest.epochs, &mut self.evaluator.costest.schedule, 20);
            self.search.config = self.search.config.clone().with_epochs(10);
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn set_epochs(epochs: &mut usize, schedule: &mut LrSchedule, n: usize) {
    *epochs = n;
    match schedule {
        LrSchedule::Cosine { total_epochs, .. } => *total_epochs = n,
        LrSchedule::StepDecay { every, .. } => *every = (n / 2).max(1),
        LrSchedule::Constant { .. } => {}
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and
/// taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let Some((path, raw)) = assignment.split_once('=') else {
        bail!("override '{assignment}' is not of the form key.path=value");
    };
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override path '{path}' has an empty component");
    }
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            _ => bail!("override path '{path}': '{}' is not an object", keys[..i].join(".")),
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last key")
}
